// Deterministic RNG for the projection: splitmix64 over BigInt, uniform
// doubles from the top 53 bits, gaussians via Box-Muller.

const MASK = 0xffffffffffffffffn;

export function splitmix64(seed: number | bigint) {
  let state = BigInt(seed) & MASK;
  return (): bigint => {
    state = (state + 0x9e3779b97f4a7c15n) & MASK;
    let z = state;
    z = ((z ^ (z >> 30n)) * 0xbf58476d1ce4e5b9n) & MASK;
    z = ((z ^ (z >> 27n)) * 0x94d049bb133111ebn) & MASK;
    return z ^ (z >> 31n);
  };
}

export function uniformStream(seed: number | bigint) {
  const next = splitmix64(seed);
  return () => Number(next() >> 11n) / 9007199254740992; // 2^53
}

export function gaussianStream(seed: number | bigint) {
  const uniform = uniformStream(seed);
  let spare: number | null = null;
  return (): number => {
    if (spare !== null) {
      const v = spare;
      spare = null;
      return v;
    }
    let u = 0;
    while (u === 0) u = uniform();
    const r = Math.sqrt(-2 * Math.log(u));
    const theta = 2 * Math.PI * uniform();
    spare = r * Math.sin(theta);
    return r * Math.cos(theta);
  };
}
