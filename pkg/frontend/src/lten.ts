// LTEN binary tensor writer: magic "LTEN", u32 version, u32 rank,
// u64 dims, little-endian float32 payload. The exporter records its
// projection seed in the version field.

export function encodeLten(rows: Float32Array[], version: number): Buffer {
  const k = rows.length;
  const dim = k > 0 ? rows[0].length : 0;
  for (const r of rows) {
    if (r.length !== dim) throw new Error('ragged rows cannot form a rank-2 tensor');
  }
  const header = Buffer.alloc(4 + 4 + 4 + 8 * 2);
  header.write('LTEN', 0, 'ascii');
  header.writeUInt32LE(version >>> 0, 4);
  header.writeUInt32LE(2, 8);
  header.writeBigUInt64LE(BigInt(k), 12);
  header.writeBigUInt64LE(BigInt(dim), 20);
  const payload = Buffer.alloc(4 * k * dim);
  for (let i = 0; i < k; i++) {
    for (let j = 0; j < dim; j++) {
      payload.writeFloatLE(rows[i][j], 4 * (i * dim + j));
    }
  }
  return Buffer.concat([header, payload]);
}

export function decodeLten(buf: Buffer): { version: number; dims: number[]; data: Float32Array } {
  if (buf.subarray(0, 4).toString('ascii') !== 'LTEN') {
    throw new Error('bad magic, not an LTEN buffer');
  }
  const version = buf.readUInt32LE(4);
  const rank = buf.readUInt32LE(8);
  const dims: number[] = [];
  for (let i = 0; i < rank; i++) {
    dims.push(Number(buf.readBigUInt64LE(12 + 8 * i)));
  }
  const n = dims.reduce((a, b) => a * b, 1);
  const start = 12 + 8 * rank;
  if (buf.length < start + 4 * n) throw new Error('truncated LTEN payload');
  const data = new Float32Array(n);
  for (let i = 0; i < n; i++) data[i] = buf.readFloatLE(start + 4 * i);
  return { version, dims, data };
}
