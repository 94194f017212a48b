export { crc32 } from './crc32.js';
export {
  FORMAT_VERSION,
  BundleFormatError,
  writeBundle,
  readBundle,
  bundleTop1,
} from './bundle.js';
export type { BundleData, BundleArrays } from './bundle.js';
export {
  UnsupportedArchitectureError,
  exportBundle,
  finalDenseLayer,
  truncatedModel,
  sampleSplits,
  seededRandom,
} from './export.js';
export type { ExportSpec, ExportResult } from './export.js';
