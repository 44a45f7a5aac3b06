/**
 * Deterministic random number generation.
 *
 * splitmix64 expands a seed into well-mixed 64-bit states; the generator
 * itself is xoshiro128**. Everything is reproducible from integer seeds, so
 * extraction runs are pure functions of their configuration.
 */

function splitmix64(state: bigint): { value: bigint; state: bigint } {
  state = (state + 0x9e3779b97f4a7c15n) & 0xffffffffffffffffn;
  let z = state;
  z = ((z ^ (z >> 30n)) * 0xbf58476d1ce4e5b9n) & 0xffffffffffffffffn;
  z = ((z ^ (z >> 27n)) * 0x94d049bb133111ebn) & 0xffffffffffffffffn;
  return { value: z ^ (z >> 31n), state };
}

export class Rng {
  private s0: number;
  private s1: number;
  private s2: number;
  private s3: number;
  private spareGaussian: number | null = null;

  /** Seed with any sequence of non-negative integers (order-sensitive). */
  constructor(...seeds: number[]) {
    let state = 0n;
    for (const seed of seeds) {
      if (!Number.isInteger(seed) || seed < 0) {
        throw new Error(`seeds must be non-negative integers, got ${seed}`);
      }
      state = (state * 0x100000001b3n + BigInt(seed) + 1n) & 0xffffffffffffffffn;
    }
    const a = splitmix64(state);
    const b = splitmix64(a.state);
    this.s0 = Number(a.value & 0xffffffffn) >>> 0;
    this.s1 = Number((a.value >> 32n) & 0xffffffffn) >>> 0;
    this.s2 = Number(b.value & 0xffffffffn) >>> 0;
    this.s3 = Number((b.value >> 32n) & 0xffffffffn) >>> 0;
    if ((this.s0 | this.s1 | this.s2 | this.s3) === 0) this.s0 = 1;
  }

  private next(): number {
    const rotl = (x: number, k: number) => ((x << k) | (x >>> (32 - k))) >>> 0;
    const result = (rotl(Math.imul(this.s1, 5) >>> 0, 7) * 9) >>> 0;
    const t = (this.s1 << 9) >>> 0;
    this.s2 ^= this.s0;
    this.s3 ^= this.s1;
    this.s1 ^= this.s2;
    this.s0 ^= this.s3;
    this.s2 ^= t;
    this.s3 = rotl(this.s3, 11);
    return result;
  }

  /** Uniform float in [0, 1). */
  uniform(): number {
    return this.next() / 4294967296;
  }

  /** Standard normal via Box-Muller. */
  normal(): number {
    if (this.spareGaussian !== null) {
      const value = this.spareGaussian;
      this.spareGaussian = null;
      return value;
    }
    let u = 0;
    while (u === 0) u = this.uniform();
    const v = this.uniform();
    const radius = Math.sqrt(-2 * Math.log(u));
    this.spareGaussian = radius * Math.sin(2 * Math.PI * v);
    return radius * Math.cos(2 * Math.PI * v);
  }

  /** Uniform integer in [0, bound). */
  integer(bound: number): number {
    return Math.floor(this.uniform() * bound);
  }
}
