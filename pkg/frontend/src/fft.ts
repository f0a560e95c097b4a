/** Real-input FFT for power-of-two sizes.
 *
 * The real transform packs the input into a half-size complex FFT and
 * untangles the spectrum, returning the first n/2+1 bins (the rest are
 * conjugate-symmetric). Twiddle tables and scratch buffers are allocated
 * once per instance, so a frontend can reuse one transformer per frame.
 */

export class RealFft {
  readonly size: number;
  private readonly half: number;
  private readonly cos: Float64Array;
  private readonly sin: Float64Array;
  private readonly re: Float64Array;
  private readonly im: Float64Array;

  constructor(size: number) {
    if (size < 4 || (size & (size - 1)) !== 0) {
      throw new Error(`FFT size must be a power of two >= 4, got ${size}`);
    }
    this.size = size;
    this.half = size >> 1;
    this.cos = new Float64Array(this.half);
    this.sin = new Float64Array(this.half);
    for (let k = 0; k < this.half; k++) {
      this.cos[k] = Math.cos((2 * Math.PI * k) / size);
      this.sin[k] = Math.sin((2 * Math.PI * k) / size);
    }
    this.re = new Float64Array(this.half);
    this.im = new Float64Array(this.half);
  }

  /** Spectrum of a real frame: bins 0..size/2 inclusive. Input shorter than
   * `size` is treated as zero-padded; longer input is rejected. */
  transform(input: Float64Array, outRe: Float64Array, outIm: Float64Array): void {
    const n = this.size;
    const half = this.half;
    if (input.length > n) {
      throw new Error(`frame of ${input.length} samples exceeds FFT size ${n}`);
    }
    if (outRe.length !== half + 1 || outIm.length !== half + 1) {
      throw new Error(`output arrays must hold ${half + 1} bins`);
    }
    const re = this.re;
    const im = this.im;
    re.fill(0);
    im.fill(0);
    const pairs = input.length >> 1;
    for (let k = 0; k < pairs; k++) {
      re[k] = input[2 * k];
      im[k] = input[2 * k + 1];
    }
    if (input.length & 1) {
      re[pairs] = input[input.length - 1];
    }
    this.fftInPlace(re, im);

    // Untangle: with Z the half-size transform of x_even + i*x_odd,
    //   E[k] = (Z[k] + conj(Z[N-k])) / 2   (spectrum of even samples)
    //   O[k] = (Z[k] - conj(Z[N-k])) / 2i  (spectrum of odd samples)
    //   X[k] = E[k] + e^{-2*pi*i*k/n} * O[k]
    for (let k = 0; k <= half; k++) {
      const k2 = k === 0 || k === half ? 0 : half - k;
      const zr = k === half ? re[0] : re[k];
      const zi = k === half ? im[0] : im[k];
      const cr = re[k2];
      const ci = -im[k2];
      const er = 0.5 * (zr + cr);
      const ei = 0.5 * (zi + ci);
      const or_ = 0.5 * (zi - ci);
      const oi = -0.5 * (zr - cr);
      let wr: number;
      let wi: number;
      if (k === half) {
        wr = -1;
        wi = 0;
      } else {
        wr = this.cos[k];
        wi = -this.sin[k];
      }
      outRe[k] = er + wr * or_ - wi * oi;
      outIm[k] = ei + wr * oi + wi * or_;
    }
  }

  /** Power spectrum |X_k|^2 for bins 0..size/2. */
  powerSpectrum(input: Float64Array, out: Float64Array): void {
    const bins = this.half + 1;
    const re = new Float64Array(bins);
    const im = new Float64Array(bins);
    this.transform(input, re, im);
    for (let k = 0; k < bins; k++) {
      out[k] = re[k] * re[k] + im[k] * im[k];
    }
  }

  /** Iterative radix-2 decimation-in-time FFT over the half-size buffers.
   * Twiddles come from the full-size table at stride size/len. */
  private fftInPlace(re: Float64Array, im: Float64Array): void {
    const n = re.length;
    for (let i = 1, j = 0; i < n; i++) {
      let bit = n >> 1;
      for (; j & bit; bit >>= 1) {
        j ^= bit;
      }
      j ^= bit;
      if (i < j) {
        const tr = re[i];
        re[i] = re[j];
        re[j] = tr;
        const ti = im[i];
        im[i] = im[j];
        im[j] = ti;
      }
    }
    for (let len = 2; len <= n; len <<= 1) {
      const halfLen = len >> 1;
      const stride = this.size / len;
      for (let start = 0; start < n; start += len) {
        for (let j = 0; j < halfLen; j++) {
          const wr = this.cos[j * stride];
          const wi = -this.sin[j * stride];
          const a = start + j;
          const b = a + halfLen;
          const tr = re[b] * wr - im[b] * wi;
          const ti = re[b] * wi + im[b] * wr;
          re[b] = re[a] - tr;
          im[b] = im[a] - ti;
          re[a] += tr;
          im[a] += ti;
        }
      }
    }
  }
}
