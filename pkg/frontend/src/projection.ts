// Seeded random projection from the encoder's feature width down to the
// recognizer's D0. Rows are drawn Gaussian and orthonormalized (modified
// Gram-Schmidt), so relative geometry of the encoded prompts survives.

import { gaussianStream } from './rng.js';

export function makeProjection(seed: number, inDim: number, outDim: number): Float64Array[] {
  if (outDim > inDim) {
    throw new Error(`cannot project ${inDim} dims up to ${outDim}`);
  }
  const gauss = gaussianStream(seed);
  const rows: Float64Array[] = [];
  for (let i = 0; i < outDim; i++) {
    const r = new Float64Array(inDim);
    for (let j = 0; j < inDim; j++) r[j] = gauss();
    rows.push(r);
  }
  for (let i = 0; i < outDim; i++) {
    for (let k = 0; k < i; k++) {
      let dot = 0;
      for (let j = 0; j < inDim; j++) dot += rows[i][j] * rows[k][j];
      for (let j = 0; j < inDim; j++) rows[i][j] -= dot * rows[k][j];
    }
    let norm = 0;
    for (let j = 0; j < inDim; j++) norm += rows[i][j] * rows[i][j];
    norm = Math.sqrt(norm);
    if (norm < 1e-12) throw new Error('degenerate projection row, change the seed');
    for (let j = 0; j < inDim; j++) rows[i][j] /= norm;
  }
  return rows;
}

export function project(rows: Float64Array[], v: Float32Array | Float64Array): Float32Array {
  const out = new Float32Array(rows.length);
  for (let i = 0; i < rows.length; i++) {
    let acc = 0;
    for (let j = 0; j < rows[i].length; j++) acc += rows[i][j] * v[j];
    out[i] = acc;
  }
  return out;
}
