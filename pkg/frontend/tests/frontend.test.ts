import { join } from "node:path";

import { describe, expect, it } from "vitest";

import { applyStats, MelFrontend, melFilterbank, MelMatrix } from "../src/frontend.js";
import { FIXTURES, readBundleDir, readF32, readJson, toFloat64 } from "./helpers.js";

const GOLDEN = join(FIXTURES, "golden-12");

interface ExpectedMel {
  shape: [number, number];
  values: number[];
}

describe("mel filterbank", () => {
  it("builds nonnegative triangles with support in every band", () => {
    const bundle = readBundleDir(GOLDEN);
    const config = bundle.frontend;
    const bins = config.fft_size / 2 + 1;
    const weights = melFilterbank(config);
    expect(weights.length).toBe(config.mel_bands * bins);
    for (let m = 0; m < config.mel_bands; m++) {
      let rowSum = 0;
      let rowMax = 0;
      for (let k = 0; k < bins; k++) {
        const w = weights[m * bins + k];
        expect(w).toBeGreaterThanOrEqual(0);
        expect(w).toBeLessThanOrEqual(1);
        rowSum += w;
        rowMax = Math.max(rowMax, w);
      }
      expect(rowSum).toBeGreaterThan(0);
      expect(rowMax).toBeGreaterThan(0);
    }
  });
});

describe("log-mel frontend parity", () => {
  it("matches the training pipeline's matrix within 1e-3 per cell", () => {
    const bundle = readBundleDir(GOLDEN);
    const samples = toFloat64(readF32(join(GOLDEN, "window.f32")));
    const expected = readJson<ExpectedMel>(join(GOLDEN, "expected-mel.json"));
    const frontend = new MelFrontend(bundle.frontend);
    const mel = frontend.compute(samples);
    expect([mel.rows, mel.cols]).toEqual(expected.shape);
    let worst = 0;
    for (let i = 0; i < mel.data.length; i++) {
      worst = Math.max(worst, Math.abs(mel.data[i] - expected.values[i]));
    }
    expect(worst).toBeLessThanOrEqual(1e-3);
  });

  it("counts frames like the training frontend", () => {
    const bundle = readBundleDir(GOLDEN);
    const frontend = new MelFrontend(bundle.frontend);
    expect(frontend.frameCount(16000)).toBe(98);
    expect(frontend.frameCount(bundle.frontend.win)).toBe(1);
    expect(() => frontend.frameCount(bundle.frontend.win - 1)).toThrow(/shorter/);
  });

  it("applies scalar and per-band normalization", () => {
    const m: MelMatrix = { data: Float64Array.from([1, 2, 3, 4]), rows: 2, cols: 2 };
    applyStats(m, { mean: 1, std: 2, count: 4 });
    expect([...m.data]).toEqual([0, 0.5, 1, 1.5]);
    const perBand: MelMatrix = { data: Float64Array.from([1, 2, 3, 4]), rows: 2, cols: 2 };
    applyStats(perBand, { mean: [1, 2], std: [1, 2], count: 2 });
    expect([...perBand.data]).toEqual([0, 0, 2, 1]);
  });
});
