/** res8 forward pass over a single log-mel window.
 *
 * Mirrors the training-side network exactly: a biased 3x3 conv, one average
 * pool, three residual blocks (conv-batchnorm-relu twice with an identity
 * skip and a post-add relu), global average pooling, a linear head, and
 * log-softmax. Inference runs in eval mode: batchnorm is a fixed affine map
 * through the running statistics stored in the bundle.
 */

export interface Res8Config {
  n_labels: number;
  n_maps: number;
  pool: [number, number];
  n_blocks: number;
}

export interface NamedArray {
  shape: number[];
  data: Float32Array;
}

const BN_EPS = 1e-5;

/** Channel-major planes: values[c * height * width + y * width + x]. */
interface FeatureMap {
  values: Float64Array;
  channels: number;
  height: number;
  width: number;
}

function conv3x3(
  input: FeatureMap,
  weight: Float32Array,
  outChannels: number,
  bias: Float32Array | null,
): FeatureMap {
  const { values, channels, height, width } = input;
  const out = new Float64Array(outChannels * height * width);
  for (let f = 0; f < outChannels; f++) {
    const outBase = f * height * width;
    for (let c = 0; c < channels; c++) {
      const wBase = (f * channels + c) * 9;
      const inBase = c * height * width;
      for (let y = 0; y < height; y++) {
        const y0 = y - 1;
        for (let x = 0; x < width; x++) {
          let acc = 0;
          for (let ky = 0; ky < 3; ky++) {
            const yy = y0 + ky;
            if (yy < 0 || yy >= height) continue;
            const rowBase = inBase + yy * width;
            const wRow = wBase + ky * 3;
            const x0 = x - 1;
            if (x0 >= 0) acc += values[rowBase + x0] * weight[wRow];
            acc += values[rowBase + x0 + 1] * weight[wRow + 1];
            if (x0 + 2 < width) acc += values[rowBase + x0 + 2] * weight[wRow + 2];
          }
          out[outBase + y * width + x] += acc;
        }
      }
    }
    if (bias !== null) {
      const b = bias[f];
      for (let i = outBase; i < outBase + height * width; i++) {
        out[i] += b;
      }
    }
  }
  return { values: out, channels: outChannels, height, width };
}

/** Non-overlapping average pool; trailing rows/cols that do not fill a
 * window are dropped. */
function avgPool(input: FeatureMap, poolH: number, poolW: number): FeatureMap {
  const { values, channels, height, width } = input;
  const outH = Math.floor(height / poolH);
  const outW = Math.floor(width / poolW);
  if (outH === 0 || outW === 0) {
    throw new Error(`input ${height}x${width} smaller than pool window ${poolH}x${poolW}`);
  }
  const out = new Float64Array(channels * outH * outW);
  const norm = 1 / (poolH * poolW);
  for (let c = 0; c < channels; c++) {
    const inBase = c * height * width;
    const outBase = c * outH * outW;
    for (let y = 0; y < outH; y++) {
      for (let x = 0; x < outW; x++) {
        let acc = 0;
        for (let dy = 0; dy < poolH; dy++) {
          const rowBase = inBase + (y * poolH + dy) * width + x * poolW;
          for (let dx = 0; dx < poolW; dx++) {
            acc += values[rowBase + dx];
          }
        }
        out[outBase + y * outW + x] = acc * norm;
      }
    }
  }
  return { values: out, channels, height: outH, width: outW };
}

function batchnormEval(
  map: FeatureMap,
  gamma: Float32Array,
  beta: Float32Array,
  runningMean: Float32Array,
  runningVar: Float32Array,
): void {
  const { values, channels, height, width } = map;
  const plane = height * width;
  for (let c = 0; c < channels; c++) {
    const inv = 1 / Math.sqrt(runningVar[c] + BN_EPS);
    const g = gamma[c];
    const mean = runningMean[c];
    const b = beta[c];
    const base = c * plane;
    for (let i = base; i < base + plane; i++) {
      values[i] = g * (values[i] - mean) * inv + b;
    }
  }
}

function reluInPlace(map: FeatureMap): void {
  const v = map.values;
  for (let i = 0; i < v.length; i++) {
    if (v[i] < 0) v[i] = 0;
  }
}

/** h := relu(x + h), reusing h's buffer. */
function addReluInPlace(x: FeatureMap, h: FeatureMap): void {
  const a = x.values;
  const b = h.values;
  for (let i = 0; i < b.length; i++) {
    const s = a[i] + b[i];
    b[i] = s > 0 ? s : 0;
  }
}

interface BlockWeights {
  conv1: Float32Array;
  bn1Gamma: Float32Array;
  bn1Beta: Float32Array;
  bn1Mean: Float32Array;
  bn1Var: Float32Array;
  conv2: Float32Array;
  bn2Gamma: Float32Array;
  bn2Beta: Float32Array;
  bn2Mean: Float32Array;
  bn2Var: Float32Array;
}

export class Res8 {
  readonly config: Res8Config;
  private readonly conv0Weight: Float32Array;
  private readonly conv0Bias: Float32Array;
  private readonly blocks: BlockWeights[];
  private readonly headWeight: Float32Array;
  private readonly headBias: Float32Array;

  constructor(
    config: Res8Config,
    params: Map<string, NamedArray>,
    buffers: Map<string, NamedArray>,
  ) {
    this.config = config;
    const param = (name: string) => {
      const entry = params.get(name);
      if (entry === undefined) throw new Error(`model is missing parameter '${name}'`);
      return entry.data;
    };
    const buffer = (name: string) => {
      const entry = buffers.get(name);
      if (entry === undefined) throw new Error(`model is missing buffer '${name}'`);
      return entry.data;
    };
    this.conv0Weight = param("conv0.weight");
    this.conv0Bias = param("conv0.bias");
    this.blocks = [];
    for (let i = 0; i < config.n_blocks; i++) {
      this.blocks.push({
        conv1: param(`blocks.${i}.conv1.weight`),
        bn1Gamma: param(`blocks.${i}.bn1.gamma`),
        bn1Beta: param(`blocks.${i}.bn1.beta`),
        bn1Mean: buffer(`blocks.${i}.bn1.running_mean`),
        bn1Var: buffer(`blocks.${i}.bn1.running_var`),
        conv2: param(`blocks.${i}.conv2.weight`),
        bn2Gamma: param(`blocks.${i}.bn2.gamma`),
        bn2Beta: param(`blocks.${i}.bn2.beta`),
        bn2Mean: buffer(`blocks.${i}.bn2.running_mean`),
        bn2Var: buffer(`blocks.${i}.bn2.running_var`),
      });
    }
    this.headWeight = param("head.weight");
    this.headBias = param("head.bias");
  }

  /** Log-probabilities for one T x M window (row-major mel frames). */
  forward(window: Float64Array, rows: number, cols: number): Float64Array {
    if (window.length !== rows * cols) {
      throw new Error(`window of ${window.length} values is not ${rows}x${cols}`);
    }
    const { n_maps, n_labels, pool } = this.config;
    let map: FeatureMap = { values: window, channels: 1, height: rows, width: cols };
    map = conv3x3(map, this.conv0Weight, n_maps, this.conv0Bias);
    map = avgPool(map, pool[0], pool[1]);
    for (const block of this.blocks) {
      const h1 = conv3x3(map, block.conv1, n_maps, null);
      batchnormEval(h1, block.bn1Gamma, block.bn1Beta, block.bn1Mean, block.bn1Var);
      reluInPlace(h1);
      const h2 = conv3x3(h1, block.conv2, n_maps, null);
      batchnormEval(h2, block.bn2Gamma, block.bn2Beta, block.bn2Mean, block.bn2Var);
      reluInPlace(h2);
      addReluInPlace(map, h2);
      map = h2;
    }
    const plane = map.height * map.width;
    const pooled = new Float64Array(n_maps);
    for (let c = 0; c < n_maps; c++) {
      let acc = 0;
      const base = c * plane;
      for (let i = base; i < base + plane; i++) {
        acc += map.values[i];
      }
      pooled[c] = acc / plane;
    }
    const logits = new Float64Array(n_labels);
    let maxLogit = -Infinity;
    for (let o = 0; o < n_labels; o++) {
      let acc = this.headBias[o];
      const base = o * n_maps;
      for (let i = 0; i < n_maps; i++) {
        acc += this.headWeight[base + i] * pooled[i];
      }
      logits[o] = acc;
      if (acc > maxLogit) maxLogit = acc;
    }
    let expSum = 0;
    for (let o = 0; o < n_labels; o++) {
      expSum += Math.exp(logits[o] - maxLogit);
    }
    const logNorm = Math.log(expSum);
    for (let o = 0; o < n_labels; o++) {
      logits[o] = logits[o] - maxLogit - logNorm;
    }
    return logits;
  }
}
