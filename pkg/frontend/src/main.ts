import { Client } from "./api.js";
import { wireApp } from "./app.js";

// Annotator identity survives reloads; prompt only on the first visit.
function annotatorId(): string {
  const stored = window.localStorage.getItem("annotator_id");
  if (stored) return stored;
  const entered = (window.prompt("Annotator id:") || "").trim() || "anonymous";
  window.localStorage.setItem("annotator_id", entered);
  return entered;
}

wireApp(document, new Client(""), annotatorId());
