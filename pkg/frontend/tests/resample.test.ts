import { describe, expect, it } from "vitest";

import { StreamResampler } from "../src/resample.js";

function collect(resampler: StreamResampler, chunks: Float32Array[]): number[] {
  const out: number[] = [];
  for (const chunk of chunks) {
    out.push(...resampler.process(chunk));
  }
  return out;
}

function splitInto(samples: Float32Array, sizes: number[]): Float32Array[] {
  const chunks: Float32Array[] = [];
  let start = 0;
  let i = 0;
  while (start < samples.length) {
    const size = sizes[i % sizes.length];
    chunks.push(samples.subarray(start, Math.min(start + size, samples.length)));
    start += size;
    i += 1;
  }
  return chunks;
}

describe("streaming microphone resampler", () => {
  it("is the identity at equal rates", () => {
    const resampler = new StreamResampler(16000, 16000);
    const chunk = Float32Array.from([0.1, -0.2, 0.3, -0.4]);
    expect(Array.from(resampler.process(chunk))).toEqual(Array.from(chunk));
  });

  it("reproduces a linear ramp exactly under 3:1 decimation", () => {
    const src = new Float32Array(3000);
    for (let i = 0; i < src.length; i++) {
      src[i] = i / 4096; // exactly representable slope
    }
    const resampler = new StreamResampler(48000, 16000);
    const out = resampler.process(src);
    expect(out.length).toBeGreaterThan(990);
    for (let n = 0; n < out.length; n++) {
      expect(Math.abs(out[n] - (3 * n) / 4096)).toBeLessThanOrEqual(1e-7);
    }
  });

  it("chunked processing equals whole-buffer processing", () => {
    const src = new Float32Array(44100);
    for (let i = 0; i < src.length; i++) {
      src[i] = Math.sin((2 * Math.PI * 440 * i) / 44100) * 0.5;
    }
    const whole = collect(new StreamResampler(44100, 16000), [src]);
    const chunked = collect(
      new StreamResampler(44100, 16000),
      splitInto(src, [128, 441, 7, 1024, 3, 333]),
    );
    expect(chunked.length).toBe(whole.length);
    for (let i = 0; i < whole.length; i++) {
      expect(chunked[i]).toBe(whole[i]);
    }
  });

  it("produces roughly rate-ratio output lengths", () => {
    const src = new Float32Array(44100);
    const out = collect(new StreamResampler(44100, 16000), splitInto(src, [480]));
    expect(Math.abs(out.length - 16000)).toBeLessThanOrEqual(2);
  });

  it("tracks a sine wave within the linear-interpolation error bound", () => {
    // 44.1k -> 16k has a fractional step, so every output genuinely
    // interpolates between two source samples
    const freq = 1000;
    const step = 44100 / 16000;
    const src = new Float32Array(4410);
    for (let i = 0; i < src.length; i++) {
      src[i] = Math.sin((2 * Math.PI * freq * i) / 44100);
    }
    const out = collect(new StreamResampler(44100, 16000), splitInto(src, [128]));
    // worst-case midpoint error for linear interpolation of a sinusoid is
    // (omega * dt)^2 / 8 with dt the source spacing: about 2.5e-3 here
    for (let n = 0; n < out.length; n++) {
      const exact = Math.sin((2 * Math.PI * freq * (n * step)) / 44100);
      expect(Math.abs(out[n] - exact)).toBeLessThanOrEqual(5e-3);
    }
  });

  it("rejects non-positive rates", () => {
    expect(() => new StreamResampler(0, 16000)).toThrow(/positive/);
    expect(() => new StreamResampler(16000, -1)).toThrow(/positive/);
  });
});
