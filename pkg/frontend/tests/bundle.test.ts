import { join } from "node:path";

import { describe, expect, it } from "vitest";

import { BundleLoadError, crc32, fetchBundle, parseBundle } from "../src/bundle.js";
import { MelFrontend, applyStats } from "../src/frontend.js";
import { FIXTURES, readBlob, readBundleDir, readF32, readManifestText, toFloat64 } from "./helpers.js";

const GOLDEN = join(FIXTURES, "golden-12");
const WAKE = join(FIXTURES, "wake");

function mutatedManifest(dir: string, mutate: (manifest: Record<string, unknown>) => void): string {
  const manifest = JSON.parse(readManifestText(dir)) as Record<string, unknown>;
  mutate(manifest);
  return JSON.stringify(manifest);
}

describe("bundle loading", () => {
  it("loads the golden 12-label bundle with 110,892 parameters", () => {
    const bundle = readBundleDir(GOLDEN);
    expect(bundle.parameterCount).toBe(110_892);
    expect(bundle.labels).toHaveLength(12);
    expect(bundle.vocabulary).toHaveLength(0);
    expect(bundle.config.n_maps).toBe(45);
    expect(bundle.stats).not.toBeNull();
  });

  it("loads the wake bundle with its two-word phrase", () => {
    const bundle = readBundleDir(WAKE);
    expect(bundle.labels).toEqual(["hey", "firefox", "negative"]);
    expect(bundle.vocabulary).toEqual(["hey", "firefox"]);
  });

  it("is idempotent: two loads produce identical logits", () => {
    const samples = toFloat64(readF32(join(GOLDEN, "window.f32")));
    const logits = [1, 2].map(() => {
      const bundle = readBundleDir(GOLDEN);
      const mel = new MelFrontend(bundle.frontend).compute(samples);
      if (bundle.stats !== null) applyStats(mel, bundle.stats);
      for (let i = 0; i < mel.data.length; i++) mel.data[i] = Math.fround(mel.data[i]);
      return bundle.model.forward(mel.data, mel.rows, mel.cols);
    });
    expect([...logits[0]]).toEqual([...logits[1]]);
  });

  it("rejects a corrupted blob with a checksum error", () => {
    const blob = readBlob(GOLDEN);
    blob[blob.length >> 1] ^= 0xff;
    expect(() => parseBundle(readManifestText(GOLDEN), blob)).toThrow(BundleLoadError);
    expect(() => parseBundle(readManifestText(GOLDEN), blob)).toThrow(/checksum/);
  });

  it("rejects a truncated blob with a checksum error", () => {
    const blob = readBlob(GOLDEN).subarray(0, 1000);
    expect(() => parseBundle(readManifestText(GOLDEN), blob)).toThrow(/checksum/);
  });

  it("rejects an unsupported format version", () => {
    const text = mutatedManifest(GOLDEN, (m) => {
      m.format_version = 99;
    });
    expect(() => parseBundle(text, readBlob(GOLDEN))).toThrow(/format_version 99/);
  });

  it("rejects an unknown architecture", () => {
    const text = mutatedManifest(GOLDEN, (m) => {
      m.arch = "res9";
    });
    expect(() => parseBundle(text, readBlob(GOLDEN))).toThrow(/architecture 'res9'/);
  });

  it("rejects unparseable manifest text", () => {
    expect(() => parseBundle("{not json", readBlob(GOLDEN))).toThrow(/unreadable manifest/);
  });

  it("rejects a manifest missing a parameter", () => {
    const text = mutatedManifest(GOLDEN, (m) => {
      m.params = (m.params as Array<{ name: string }>).filter((p) => p.name !== "conv0.bias");
    });
    expect(() => parseBundle(text, readBlob(GOLDEN))).toThrow(/missing parameter 'conv0.bias'/);
  });

  it("rejects a manifest listing an unknown parameter", () => {
    const text = mutatedManifest(GOLDEN, (m) => {
      (m.params as Array<object>).push({ name: "conv9.weight", shape: [1], offset: 0, len: 1 });
    });
    expect(() => parseBundle(text, readBlob(GOLDEN))).toThrow(/unknown parameters \[conv9.weight\]/);
  });

  it("rejects a parameter whose shape disagrees with the architecture", () => {
    const text = mutatedManifest(GOLDEN, (m) => {
      const conv0 = (m.params as Array<{ name: string; shape: number[] }>).find(
        (p) => p.name === "conv0.weight",
      );
      conv0!.shape = [45, 1, 5, 5];
    });
    expect(() => parseBundle(text, readBlob(GOLDEN))).toThrow(/shape/);
  });

  it("computes the standard CRC-32", () => {
    // "123456789" is the classic check vector for CRC-32/ISO-HDLC
    expect(crc32(new TextEncoder().encode("123456789"))).toBe(0xcbf43926);
    expect(crc32(new Uint8Array(0))).toBe(0);
  });
});

describe("fetchBundle", () => {
  const files = new Map<string, Uint8Array>([
    ["bundle/manifest.json", new TextEncoder().encode(readManifestText(GOLDEN))],
    ["bundle/params.bin", readBlob(GOLDEN)],
  ]);
  const fakeFetch = (async (url: string | URL | Request) => {
    const key = String(url);
    const body = files.get(key);
    if (body === undefined) {
      return { ok: false, status: 404 } as Response;
    }
    return {
      ok: true,
      status: 200,
      text: async () => new TextDecoder().decode(body),
      arrayBuffer: async () => body.buffer.slice(body.byteOffset, body.byteOffset + body.byteLength),
    } as unknown as Response;
  }) as typeof fetch;

  it("fetches and parses a bundle over HTTP", async () => {
    const bundle = await fetchBundle("bundle", fakeFetch);
    expect(bundle.parameterCount).toBe(110_892);
  });

  it("surfaces HTTP failures as load errors", async () => {
    await expect(fetchBundle("missing", fakeFetch)).rejects.toThrow(/HTTP 404/);
  });
});
