import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "jsdom",
    include: ["tests/**/*.test.ts"],
    // The round-trip test spawns the Python gateway and waits for it to
    // come up, so the budget is generous.
    testTimeout: 60_000,
    hookTimeout: 120_000,
  },
});
