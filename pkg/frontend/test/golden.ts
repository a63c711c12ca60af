import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import type { EventRecord } from "../src/types.js";

export function goldenEvents(): EventRecord[] {
  // dist/test/golden.js -> repo fixture lives beside the TS sources
  const here = dirname(fileURLToPath(import.meta.url));
  const path = join(here, "..", "..", "test", "golden", "s1-events.jsonl");
  return readFileSync(path, "utf-8")
    .split("\n")
    .filter((line) => line.trim().length > 0)
    .map((line) => JSON.parse(line) as EventRecord);
}
