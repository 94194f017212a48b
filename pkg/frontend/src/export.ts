/**
 * Penultimate-feature export: given a layers model whose last layer is a
 * dense (linear) head, run batched inference up to the head's input, copy the
 * head's kernel and bias verbatim, and write everything as a feature bundle.
 *
 * The exported features are exactly the inputs of the final dense layer, so
 * `features @ W + b` reproduces the model's logits and the consumer can
 * recalibrate without touching the backbone.
 */

import * as tf from '@tensorflow/tfjs';
import { BundleData, bundleTop1, readBundle, writeBundle } from './bundle.js';

export class UnsupportedArchitectureError extends Error {}

export interface ExportSpec {
  /** recorded in metadata only; the model itself is passed in */
  modelId?: string;
  datasetId?: string;
  outDir: string;
  calibrationSize: number;
  testSize: number;
  batchSize?: number;
  seed?: number;
  metadata?: Record<string, string>;
}

export interface ExportResult {
  dir: string;
  m: number;
  n: number;
  numClasses: number;
  /** top-1 computed during export, from the in-memory arrays */
  top1: number;
  /** top-1 recomputed from the written bundle alone; must equal `top1` */
  verifiedTop1: number;
}

/** Deterministic 32-bit PRNG (mulberry32) for split sampling. */
export function seededRandom(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

/** Seeded unstratified sampling of disjoint calibration/test index lists. */
export function sampleSplits(
  m: number,
  calibrationSize: number,
  testSize: number,
  seed: number,
): { calibration: number[]; test: number[] } {
  if (calibrationSize + testSize > m) {
    throw new RangeError(`calibration+test (${calibrationSize + testSize}) exceeds m=${m}`);
  }
  const rand = seededRandom(seed);
  const perm = Array.from({ length: m }, (_, i) => i);
  for (let i = m - 1; i > 0; i--) {
    const j = Math.floor(rand() * (i + 1));
    [perm[i], perm[j]] = [perm[j], perm[i]];
  }
  const calibration = perm.slice(0, calibrationSize).sort((a, b) => a - b);
  const test = perm.slice(calibrationSize, calibrationSize + testSize).sort((a, b) => a - b);
  return { calibration, test };
}

/** The final dense layer, or an explicit unsupported-architecture error. */
export function finalDenseLayer(model: tf.LayersModel): tf.layers.Layer {
  const layers = model.layers;
  if (layers.length === 0) {
    throw new UnsupportedArchitectureError('model has no layers');
  }
  const last = layers[layers.length - 1];
  if (last.getClassName() !== 'Dense') {
    throw new UnsupportedArchitectureError(
      `final layer is ${last.getClassName()}, need a single Dense head`,
    );
  }
  return last;
}

/** A model mapping the original input to the final dense layer's input. */
export function truncatedModel(model: tf.LayersModel): tf.LayersModel {
  const head = finalDenseLayer(model);
  const headInput = head.input;
  if (Array.isArray(headInput)) {
    throw new UnsupportedArchitectureError('final dense layer has multiple inputs');
  }
  return tf.model({ inputs: model.inputs, outputs: headInput });
}

export async function exportBundle(
  model: tf.LayersModel,
  inputs: tf.Tensor,
  labels: Uint32Array,
  spec: ExportSpec,
): Promise<ExportResult> {
  const m = inputs.shape[0];
  if (m !== labels.length) {
    throw new RangeError(`inputs have ${m} rows but labels has ${labels.length}`);
  }
  const head = finalDenseLayer(model);
  const backbone = truncatedModel(model);
  const batchSize = spec.batchSize ?? 64;

  const featTensor = backbone.predict(inputs, { batchSize }) as tf.Tensor;
  if (featTensor.shape.length !== 2) {
    featTensor.dispose();
    throw new UnsupportedArchitectureError(
      `penultimate output has rank ${featTensor.shape.length}, expected 2`,
    );
  }
  const n = featTensor.shape[1] as number;
  const features = new Float32Array(await featTensor.data());
  featTensor.dispose();

  // kernel is stored n x C; the bundle wants one class vector per row (C x n)
  const headWeights = head.getWeights();
  const kernel = (await headWeights[0].data()) as Float32Array;
  const numClasses = headWeights[0].shape[1] as number;
  const weights = new Float32Array(numClasses * n);
  for (let j = 0; j < n; j++) {
    for (let c = 0; c < numClasses; c++) {
      weights[c * n + j] = kernel[j * numClasses + c];
    }
  }
  let bias = new Float32Array(numClasses);
  let biasNote = 'absent-zero-filled';
  if (headWeights.length > 1) {
    bias = new Float32Array(await headWeights[1].data());
    biasNote = 'copied';
  }

  const splits = sampleSplits(m, spec.calibrationSize, spec.testSize, spec.seed ?? 0);
  const data: BundleData = {
    m,
    n,
    numClasses,
    features,
    labels,
    weights,
    bias,
    splits,
    metadata: {
      source: 'feature-exporter',
      model: spec.modelId ?? 'in-memory',
      dataset: spec.datasetId ?? 'in-memory',
      bias: biasNote,
      split_sampling: 'seeded-unstratified',
      seed: String(spec.seed ?? 0),
      ...spec.metadata,
    },
  };
  const top1 = bundleTop1(data);
  writeBundle(spec.outDir, data);

  // verification pass: reread from disk and recompute from the bundle alone
  const verifiedTop1 = bundleTop1(readBundle(spec.outDir));
  if (verifiedTop1 !== top1) {
    throw new Error(
      `bundle verification failed: export top-1 ${top1} vs reread top-1 ${verifiedTop1}`,
    );
  }
  return { dir: spec.outDir, m, n, numClasses, top1, verifiedTop1 };
}
