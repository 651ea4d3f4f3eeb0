/**
 * JSON reader that keeps the raw source text of every value.
 *
 * The agreement panel must show service numbers byte-for-byte: the service
 * serializes Python floats, and re-rendering them through JavaScript number
 * formatting changes bytes (Python writes the matrix diagonal as "1.0",
 * `String(1)` gives "1"). So the panel never formats numbers itself; it
 * slices them straight out of the response body via this parser.
 */

export interface RawObject {
  kind: "object";
  entries: Map<string, RawValue>;
  raw: string;
}

export interface RawArray {
  kind: "array";
  items: RawValue[];
  raw: string;
}

export interface RawScalar {
  kind: "string" | "number" | "literal";
  value: string | number | boolean | null;
  raw: string;
}

export type RawValue = RawObject | RawArray | RawScalar;

const WS = new Set([" ", "\t", "\n", "\r"]);

class Scanner {
  pos = 0;

  constructor(private text: string) {}

  fail(why: string): never {
    throw new Error(`bad JSON at offset ${this.pos}: ${why}`);
  }

  skipWs(): void {
    while (this.pos < this.text.length && WS.has(this.text[this.pos])) this.pos++;
  }

  peek(): string {
    if (this.pos >= this.text.length) this.fail("unexpected end of input");
    return this.text[this.pos];
  }

  expect(ch: string): void {
    if (this.text[this.pos] !== ch) this.fail(`expected ${JSON.stringify(ch)}`);
    this.pos++;
  }

  value(): RawValue {
    this.skipWs();
    const start = this.pos;
    const ch = this.peek();
    let out: RawValue;
    if (ch === "{") out = this.object();
    else if (ch === "[") out = this.array();
    else if (ch === '"') out = { kind: "string", value: this.string(), raw: "" };
    else if (ch === "-" || (ch >= "0" && ch <= "9")) out = this.number();
    else out = this.literal();
    out.raw = this.text.slice(start, this.pos);
    return out;
  }

  object(): RawObject {
    this.expect("{");
    const entries = new Map<string, RawValue>();
    this.skipWs();
    if (this.peek() === "}") {
      this.pos++;
      return { kind: "object", entries, raw: "" };
    }
    for (;;) {
      this.skipWs();
      const key = this.string();
      this.skipWs();
      this.expect(":");
      entries.set(key, this.value());
      this.skipWs();
      if (this.peek() === ",") {
        this.pos++;
        continue;
      }
      this.expect("}");
      return { kind: "object", entries, raw: "" };
    }
  }

  array(): RawArray {
    this.expect("[");
    const items: RawValue[] = [];
    this.skipWs();
    if (this.peek() === "]") {
      this.pos++;
      return { kind: "array", items, raw: "" };
    }
    for (;;) {
      items.push(this.value());
      this.skipWs();
      if (this.peek() === ",") {
        this.pos++;
        continue;
      }
      this.expect("]");
      return { kind: "array", items, raw: "" };
    }
  }

  string(): string {
    const start = this.pos;
    this.expect('"');
    while (this.pos < this.text.length) {
      const ch = this.text[this.pos];
      if (ch === "\\") this.pos += 2;
      else if (ch === '"') {
        this.pos++;
        // Delegate unescaping to the built-in parser; the lexer above only
        // needs to find the closing quote.
        return JSON.parse(this.text.slice(start, this.pos)) as string;
      } else this.pos++;
    }
    this.fail("unterminated string");
  }

  number(): RawScalar {
    const start = this.pos;
    const re = /-?(?:0|[1-9]\d*)(?:\.\d+)?(?:[eE][+-]?\d+)?/y;
    re.lastIndex = this.pos;
    const m = re.exec(this.text);
    if (!m || m.index !== this.pos) this.fail("malformed number");
    this.pos += m[0].length;
    return { kind: "number", value: Number(m[0]), raw: this.text.slice(start, this.pos) };
  }

  literal(): RawScalar {
    for (const [word, value] of [
      ["true", true],
      ["false", false],
      ["null", null],
    ] as const) {
      if (this.text.startsWith(word, this.pos)) {
        this.pos += word.length;
        return { kind: "literal", value, raw: word };
      }
    }
    this.fail("unexpected token");
  }
}

export function parseRaw(text: string): RawValue {
  const scanner = new Scanner(text);
  const out = scanner.value();
  scanner.skipWs();
  if (scanner.pos !== text.length) scanner.fail("trailing characters");
  return out;
}

/** Object member access; throws when the shape is not what the caller assumed. */
export function member(value: RawValue, key: string): RawValue {
  if (value.kind !== "object") throw new Error(`expected object, got ${value.kind}`);
  const found = value.entries.get(key);
  if (found === undefined) throw new Error(`missing key ${JSON.stringify(key)}`);
  return found;
}

export function numberRaw(value: RawValue): string {
  if (value.kind !== "number") throw new Error(`expected number, got ${value.kind}`);
  return value.raw;
}
