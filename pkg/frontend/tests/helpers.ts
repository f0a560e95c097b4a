import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { Bundle, parseBundle } from "../src/bundle.js";

export const FIXTURES = join(dirname(fileURLToPath(import.meta.url)), "..", "fixtures");

export function readF32(path: string): Float32Array {
  const buf = readFileSync(path);
  return new Float32Array(buf.buffer.slice(buf.byteOffset, buf.byteOffset + buf.byteLength));
}

export function readJson<T>(path: string): T {
  return JSON.parse(readFileSync(path, "utf8")) as T;
}

export function readManifestText(dir: string): string {
  return readFileSync(join(dir, "manifest.json"), "utf8");
}

export function readBlob(dir: string): Uint8Array {
  return new Uint8Array(readFileSync(join(dir, "params.bin")));
}

export function readBundleDir(dir: string): Bundle {
  return parseBundle(readManifestText(dir), readBlob(dir));
}

export function toFloat64(x: Float32Array): Float64Array {
  const out = new Float64Array(x.length);
  out.set(x);
  return out;
}

/** Deterministic uniform [-1, 1) generator for property-style checks
 * (splitmix64-flavored integer scrambling, no RNG dependency). */
export function makeRandom(seed: number): () => number {
  let state = BigInt(seed) & 0xffffffffffffffffn;
  return () => {
    state = (state + 0x9e3779b97f4a7c15n) & 0xffffffffffffffffn;
    let z = state;
    z = ((z ^ (z >> 30n)) * 0xbf58476d1ce4e5b9n) & 0xffffffffffffffffn;
    z = ((z ^ (z >> 27n)) * 0x94d049bb133111ebn) & 0xffffffffffffffffn;
    z = z ^ (z >> 31n);
    return Number(z >> 11n) / 2 ** 53 * 2 - 1;
  };
}
