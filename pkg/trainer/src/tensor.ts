/** Minimal reverse-mode autodiff over dense float64 tensors.
 *
 * Activations are channels-first: shape [C, D, H, W]. Ops record a
 * backward closure on the tape; `backward(loss)` replays them in reverse.
 */

export class Tensor {
  data: Float64Array;
  shape: number[];
  grad: Float64Array | null = null;
  requiresGrad = false;

  constructor(shape: number[], data?: Float64Array) {
    this.shape = shape.slice();
    const n = shape.reduce((a, b) => a * b, 1);
    if (data !== undefined) {
      if (data.length !== n) {
        throw new Error(`data length ${data.length} != shape size ${n}`);
      }
      this.data = data;
    } else {
      this.data = new Float64Array(n);
    }
  }

  get size(): number {
    return this.data.length;
  }

  gradArray(): Float64Array {
    if (this.grad === null) this.grad = new Float64Array(this.size);
    return this.grad;
  }

  zeroGrad(): void {
    if (this.grad !== null) this.grad.fill(0);
  }
}

export function param(shape: number[], data?: Float64Array): Tensor {
  const t = new Tensor(shape, data);
  t.requiresGrad = true;
  return t;
}

interface Node {
  backward: () => void;
}

export class Tape {
  private nodes: Node[] = [];

  record(out: Tensor, inputs: Tensor[], backward: () => void): void {
    if (inputs.some((t) => t.requiresGrad)) {
      out.requiresGrad = true;
      this.nodes.push({ backward });
    }
  }

  backward(loss: Tensor): void {
    if (loss.size !== 1) throw new Error("backward expects a scalar loss");
    loss.gradArray()[0] = 1.0;
    for (let i = this.nodes.length - 1; i >= 0; i--) {
      this.nodes[i].backward();
    }
  }

  reset(): void {
    this.nodes.length = 0;
  }
}

/** Deterministic PRNG (splitmix64-style on 32-bit state). */
export function makeRng(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x9e3779b9) >>> 0;
    let z = state;
    z = Math.imul(z ^ (z >>> 16), 0x21f0aaad);
    z = Math.imul(z ^ (z >>> 15), 0x735a2d97);
    z = z ^ (z >>> 15);
    return (z >>> 0) / 4294967296;
  };
}

/** Standard normal via Box-Muller on the given uniform source. */
export function makeGauss(rng: () => number): () => number {
  let spare: number | null = null;
  return () => {
    if (spare !== null) {
      const v = spare;
      spare = null;
      return v;
    }
    let u = 0;
    let v = 0;
    do {
      u = rng();
    } while (u <= 1e-12);
    v = rng();
    const r = Math.sqrt(-2.0 * Math.log(u));
    spare = r * Math.sin(2 * Math.PI * v);
    return r * Math.cos(2 * Math.PI * v);
  };
}
