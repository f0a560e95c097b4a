/** Model-bundle loading: the manifest.json + params.bin directory format.
 *
 * The manifest carries the architecture config, a named table of parameter
 * and buffer slices into the little-endian float32 blob, the feature
 * frontend settings, normalization stats, the label set, and a CRC-32 of
 * the blob. Validation order matches the training-side importer: manifest
 * readability, format version, architecture, checksum, then the named
 * tables (missing, extra, or mis-shaped entries are all errors).
 */

import { DatasetStats, FrontendConfig } from "./frontend.js";
import { NamedArray, Res8, Res8Config } from "./model.js";

export const FORMAT_VERSION = 1;

export class BundleLoadError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "BundleLoadError";
  }
}

interface TableEntry {
  name: string;
  shape: number[];
  offset: number;
  len: number;
}

interface Manifest {
  format_version: number;
  arch: string;
  config: Res8Config;
  params: TableEntry[];
  buffers: TableEntry[];
  frontend: FrontendConfig;
  stats: DatasetStats | null;
  labels: string[];
  vocabulary: string[];
  crc32: number;
}

const CRC_TABLE = (() => {
  const table = new Uint32Array(256);
  for (let i = 0; i < 256; i++) {
    let c = i;
    for (let k = 0; k < 8; k++) {
      c = c & 1 ? 0xedb88320 ^ (c >>> 1) : c >>> 1;
    }
    table[i] = c;
  }
  return table;
})();

export function crc32(bytes: Uint8Array): number {
  let c = 0xffffffff;
  for (let i = 0; i < bytes.length; i++) {
    c = CRC_TABLE[(c ^ bytes[i]) & 0xff] ^ (c >>> 8);
  }
  return (c ^ 0xffffffff) >>> 0;
}

export interface Bundle {
  config: Res8Config;
  frontend: FrontendConfig;
  stats: DatasetStats | null;
  labels: string[];
  vocabulary: string[];
  model: Res8;
  parameterCount: number;
}

function expectedShapes(config: Res8Config): {
  params: Array<[string, number[]]>;
  buffers: Array<[string, number[]]>;
} {
  const m = config.n_maps;
  const params: Array<[string, number[]]> = [
    ["conv0.weight", [m, 1, 3, 3]],
    ["conv0.bias", [m]],
  ];
  const buffers: Array<[string, number[]]> = [];
  for (let i = 0; i < config.n_blocks; i++) {
    for (const half of [1, 2]) {
      params.push([`blocks.${i}.conv${half}.weight`, [m, m, 3, 3]]);
      params.push([`blocks.${i}.bn${half}.gamma`, [m]]);
      params.push([`blocks.${i}.bn${half}.beta`, [m]]);
      buffers.push([`blocks.${i}.bn${half}.running_mean`, [m]]);
      buffers.push([`blocks.${i}.bn${half}.running_var`, [m]]);
    }
  }
  params.push(["head.weight", [config.n_labels, m]]);
  params.push(["head.bias", [config.n_labels]]);
  return { params, buffers };
}

function sameShape(a: number[], b: number[]): boolean {
  return a.length === b.length && a.every((v, i) => v === b[i]);
}

function loadNamed(
  table: TableEntry[],
  values: Float32Array,
  expected: Array<[string, number[]]>,
  kind: string,
): Map<string, NamedArray> {
  const byName = new Map<string, TableEntry>();
  for (const entry of table) {
    if (byName.has(entry.name)) {
      throw new BundleLoadError(`manifest lists ${kind} '${entry.name}' twice`);
    }
    byName.set(entry.name, entry);
  }
  const out = new Map<string, NamedArray>();
  for (const [name, shape] of expected) {
    const entry = byName.get(name);
    if (entry === undefined) {
      throw new BundleLoadError(`manifest is missing ${kind} '${name}'`);
    }
    byName.delete(name);
    if (!sameShape(entry.shape, shape)) {
      throw new BundleLoadError(
        `${kind} '${name}' shape [${entry.shape}] != model shape [${shape}]`,
      );
    }
    const size = shape.reduce((a, b) => a * b, 1);
    if (entry.len !== size || entry.offset < 0 || entry.offset + entry.len > values.length) {
      throw new BundleLoadError(
        `${kind} '${name}' blob slice [${entry.offset}:${entry.offset + entry.len}] invalid`,
      );
    }
    out.set(name, { shape, data: values.subarray(entry.offset, entry.offset + entry.len) });
  }
  if (byName.size > 0) {
    throw new BundleLoadError(
      `manifest lists unknown ${kind}s [${[...byName.keys()].sort().join(", ")}]`,
    );
  }
  return out;
}

/** Parse and validate a bundle from its two files' raw contents. */
export function parseBundle(manifestText: string, blob: Uint8Array): Bundle {
  let manifest: Manifest;
  try {
    manifest = JSON.parse(manifestText) as Manifest;
  } catch (err) {
    throw new BundleLoadError(`unreadable manifest: ${(err as Error).message}`);
  }
  if (manifest.format_version !== FORMAT_VERSION) {
    throw new BundleLoadError(
      `format_version ${manifest.format_version} unsupported (expected ${FORMAT_VERSION})`,
    );
  }
  if (manifest.arch !== "res8") {
    throw new BundleLoadError(`unknown architecture '${manifest.arch}'`);
  }
  if (crc32(blob) !== manifest.crc32) {
    throw new BundleLoadError("params.bin checksum mismatch (corrupt or truncated)");
  }
  if (blob.byteLength % 4 !== 0) {
    throw new BundleLoadError(`params.bin length ${blob.byteLength} is not a float32 array`);
  }
  const aligned = new Uint8Array(blob); // copy: guarantees 4-byte alignment
  const values = new Float32Array(aligned.buffer, 0, aligned.byteLength / 4);
  const expected = expectedShapes(manifest.config);
  const params = loadNamed(manifest.params, values, expected.params, "parameter");
  const buffers = loadNamed(manifest.buffers, values, expected.buffers, "buffer");
  const model = new Res8(manifest.config, params, buffers);
  let parameterCount = 0;
  for (const [, shape] of expected.params) {
    parameterCount += shape.reduce((a, b) => a * b, 1);
  }
  return {
    config: manifest.config,
    frontend: manifest.frontend,
    stats: manifest.stats ?? null,
    labels: manifest.labels,
    vocabulary: manifest.vocabulary ?? [],
    model,
    parameterCount,
  };
}

/** Fetch manifest.json + params.bin from a bundle directory URL. */
export async function fetchBundle(
  baseUrl: string,
  fetchFn: typeof fetch = fetch,
): Promise<Bundle> {
  const base = baseUrl.endsWith("/") ? baseUrl : `${baseUrl}/`;
  const manifestResp = await fetchFn(`${base}manifest.json`);
  if (!manifestResp.ok) {
    throw new BundleLoadError(`manifest.json: HTTP ${manifestResp.status}`);
  }
  const manifestText = await manifestResp.text();
  const blobResp = await fetchFn(`${base}params.bin`);
  if (!blobResp.ok) {
    throw new BundleLoadError(`params.bin: HTTP ${blobResp.status}`);
  }
  const blob = new Uint8Array(await blobResp.arrayBuffer());
  return parseBundle(manifestText, blob);
}
