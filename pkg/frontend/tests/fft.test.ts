import { describe, expect, it } from "vitest";

import { RealFft } from "../src/fft.js";
import { makeRandom } from "./helpers.js";

/** O(n^2) reference DFT of a real frame zero-padded to `size`. */
function directSpectrum(input: Float64Array, size: number): { re: Float64Array; im: Float64Array } {
  const bins = size / 2 + 1;
  const re = new Float64Array(bins);
  const im = new Float64Array(bins);
  for (let k = 0; k < bins; k++) {
    let sumRe = 0;
    let sumIm = 0;
    for (let i = 0; i < input.length; i++) {
      const angle = (-2 * Math.PI * k * i) / size;
      sumRe += input[i] * Math.cos(angle);
      sumIm += input[i] * Math.sin(angle);
    }
    re[k] = sumRe;
    im[k] = sumIm;
  }
  return { re, im };
}

describe("RealFft", () => {
  it("matches a direct DFT on random frames across sizes", () => {
    const rand = makeRandom(1);
    for (const size of [8, 32, 128, 512]) {
      const fft = new RealFft(size);
      for (let trial = 0; trial < 5; trial++) {
        const input = new Float64Array(size);
        for (let i = 0; i < size; i++) input[i] = rand();
        const re = new Float64Array(size / 2 + 1);
        const im = new Float64Array(size / 2 + 1);
        fft.transform(input, re, im);
        const want = directSpectrum(input, size);
        for (let k = 0; k <= size / 2; k++) {
          expect(Math.abs(re[k] - want.re[k])).toBeLessThan(1e-9 * size);
          expect(Math.abs(im[k] - want.im[k])).toBeLessThan(1e-9 * size);
        }
      }
    }
  });

  it("zero-pads short frames like an explicit padded DFT", () => {
    const rand = makeRandom(2);
    const fft = new RealFft(512);
    for (const frameLen of [480, 481, 256, 1]) {
      const input = new Float64Array(frameLen);
      for (let i = 0; i < frameLen; i++) input[i] = rand();
      const re = new Float64Array(257);
      const im = new Float64Array(257);
      fft.transform(input, re, im);
      const want = directSpectrum(input, 512);
      for (let k = 0; k <= 256; k++) {
        expect(Math.abs(re[k] - want.re[k])).toBeLessThan(1e-9 * 512);
        expect(Math.abs(im[k] - want.im[k])).toBeLessThan(1e-9 * 512);
      }
    }
  });

  it("computes the power spectrum as squared magnitudes", () => {
    const rand = makeRandom(3);
    const fft = new RealFft(64);
    const input = new Float64Array(64);
    for (let i = 0; i < 64; i++) input[i] = rand();
    const re = new Float64Array(33);
    const im = new Float64Array(33);
    fft.transform(input, re, im);
    const power = new Float64Array(33);
    fft.powerSpectrum(input, power);
    for (let k = 0; k < 33; k++) {
      expect(power[k]).toBeCloseTo(re[k] * re[k] + im[k] * im[k], 12);
    }
  });

  it("rejects non-power-of-two sizes and oversized frames", () => {
    expect(() => new RealFft(480)).toThrow(/power of two/);
    const fft = new RealFft(8);
    expect(() =>
      fft.transform(new Float64Array(9), new Float64Array(5), new Float64Array(5)),
    ).toThrow(/exceeds/);
  });
});
