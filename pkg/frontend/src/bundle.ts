/**
 * Writer/reader for the feature-bundle directory format shared with the
 * recalibration toolkit:
 *
 *   manifest.json  format_version 1, array table with CRC-32s, splits, metadata
 *   features.bin   float32 little-endian, m x n row-major
 *   labels.bin     uint32 little-endian
 *   weights.bin    float32, C x n (one class vector per row)
 *   bias.bin       float32, length C
 *
 * The reader re-validates every checksum so a bundle that loads here also
 * loads in the consumer.
 */

import { mkdirSync, readFileSync, writeFileSync } from 'fs';
import { join } from 'path';
import { crc32 } from './crc32.js';

export const FORMAT_VERSION = 1;

export interface BundleArrays {
  features: Float32Array; // m * n, row-major
  labels: Uint32Array; // m
  weights: Float32Array; // C * n, row-per-class
  bias: Float32Array; // C
}

export interface BundleData extends BundleArrays {
  m: number;
  n: number;
  numClasses: number;
  splits: Record<string, number[]>;
  metadata: Record<string, string>;
}

interface ArrayEntry {
  file: string;
  dtype: '<f4' | '<u4';
  shape: number[];
  offset: number;
  byte_length: number;
  crc32: number;
}

const LITTLE_ENDIAN = (() => {
  const probe = new Uint8Array(new Uint32Array([1]).buffer);
  return probe[0] === 1;
})();

function toLEBytes(arr: Float32Array | Uint32Array): Uint8Array {
  if (LITTLE_ENDIAN) {
    return new Uint8Array(arr.buffer, arr.byteOffset, arr.byteLength);
  }
  // big-endian host: byte-swap through a DataView
  const out = new Uint8Array(arr.byteLength);
  const view = new DataView(out.buffer);
  if (arr instanceof Float32Array) {
    arr.forEach((v, i) => view.setFloat32(4 * i, v, true));
  } else {
    arr.forEach((v, i) => view.setUint32(4 * i, v, true));
  }
  return out;
}

function fromLEBytes(bytes: Uint8Array, dtype: '<f4' | '<u4'): Float32Array | Uint32Array {
  const copy = bytes.slice(); // own the buffer; avoid alignment issues
  if (LITTLE_ENDIAN) {
    return dtype === '<f4'
      ? new Float32Array(copy.buffer)
      : new Uint32Array(copy.buffer);
  }
  const view = new DataView(copy.buffer);
  const count = copy.byteLength / 4;
  if (dtype === '<f4') {
    const out = new Float32Array(count);
    for (let i = 0; i < count; i++) out[i] = view.getFloat32(4 * i, true);
    return out;
  }
  const out = new Uint32Array(count);
  for (let i = 0; i < count; i++) out[i] = view.getUint32(4 * i, true);
  return out;
}

export class BundleFormatError extends Error {}

export function writeBundle(dir: string, data: BundleData): void {
  const { m, n, numClasses } = data;
  if (data.features.length !== m * n) {
    throw new BundleFormatError(`features length ${data.features.length} != m*n = ${m * n}`);
  }
  if (data.labels.length !== m) {
    throw new BundleFormatError(`labels length ${data.labels.length} != m = ${m}`);
  }
  if (data.weights.length !== numClasses * n) {
    throw new BundleFormatError(`weights length ${data.weights.length} != C*n`);
  }
  if (data.bias.length !== numClasses) {
    throw new BundleFormatError(`bias length ${data.bias.length} != C = ${numClasses}`);
  }
  for (const label of data.labels) {
    if (label >= numClasses) {
      throw new BundleFormatError(`label ${label} out of range for C=${numClasses}`);
    }
  }

  mkdirSync(dir, { recursive: true });
  const table: Record<string, ArrayEntry> = {};
  const specs: Array<[string, Float32Array | Uint32Array, '<f4' | '<u4', number[]]> = [
    ['features', data.features, '<f4', [m, n]],
    ['labels', data.labels, '<u4', [m]],
    ['weights', data.weights, '<f4', [numClasses, n]],
    ['bias', data.bias, '<f4', [numClasses]],
  ];
  for (const [name, arr, dtype, shape] of specs) {
    const bytes = toLEBytes(arr);
    writeFileSync(join(dir, `${name}.bin`), bytes);
    table[name] = {
      file: `${name}.bin`,
      dtype,
      shape,
      offset: 0,
      byte_length: bytes.byteLength,
      crc32: crc32(bytes),
    };
  }
  const manifest = {
    format_version: FORMAT_VERSION,
    endianness: 'little',
    m,
    n,
    C: numClasses,
    arrays: table,
    splits: data.splits,
    metadata: data.metadata,
  };
  writeFileSync(join(dir, 'manifest.json'), JSON.stringify(manifest, null, 2) + '\n');
}

export function readBundle(dir: string): BundleData {
  const manifest = JSON.parse(readFileSync(join(dir, 'manifest.json'), 'utf-8'));
  if (manifest.format_version !== FORMAT_VERSION) {
    throw new BundleFormatError(`unsupported format version ${manifest.format_version}`);
  }
  const arrays: Record<string, Float32Array | Uint32Array> = {};
  for (const [name, entry] of Object.entries<ArrayEntry>(manifest.arrays)) {
    const raw = readFileSync(join(dir, entry.file));
    const bytes = new Uint8Array(raw.buffer, raw.byteOffset + entry.offset, entry.byte_length);
    if (bytes.byteLength < entry.byte_length) {
      throw new BundleFormatError(`array '${name}' truncated`);
    }
    if (crc32(bytes) !== entry.crc32) {
      throw new BundleFormatError(`array '${name}' failed its CRC-32 check`);
    }
    arrays[name] = fromLEBytes(bytes, entry.dtype);
  }
  return {
    m: manifest.m,
    n: manifest.n,
    numClasses: manifest.C,
    features: arrays.features as Float32Array,
    labels: arrays.labels as Uint32Array,
    weights: arrays.weights as Float32Array,
    bias: arrays.bias as Float32Array,
    splits: manifest.splits,
    metadata: manifest.metadata,
  };
}

/** Top-1 accuracy recomputed from bundle arrays alone (row-major logits). */
export function bundleTop1(data: BundleData): number {
  const { m, n, numClasses, features, weights, bias, labels } = data;
  let hits = 0;
  for (let i = 0; i < m; i++) {
    let best = -Infinity;
    let arg = 0;
    for (let c = 0; c < numClasses; c++) {
      let s = bias[c];
      for (let j = 0; j < n; j++) {
        s += features[i * n + j] * weights[c * n + j];
      }
      if (s > best) {
        best = s;
        arg = c;
      }
    }
    if (arg === labels[i]) hits++;
  }
  return hits / m;
}
