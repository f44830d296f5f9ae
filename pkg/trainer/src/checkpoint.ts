/** Binary checkpoint: "SBT1" magic, u32 JSON length, JSON metadata
 * (network config, class ids, tensor shapes), float32 payload. */

import * as fs from "node:fs";

import { Tensor } from "./tensor.js";
import { NetConfig, UNet3D } from "./unet.js";

const MAGIC = "SBT1";

export interface CheckpointMeta {
  role: string;
  config: NetConfig;
  classIds: number[];
  shapes: number[][];
}

export function saveCheckpoint(path: string, role: string, net: UNet3D,
                               classIds: number[]): void {
  const params = net.params();
  const meta: CheckpointMeta = {
    role,
    config: net.config,
    classIds,
    shapes: params.map((p) => p.shape),
  };
  const json = Buffer.from(JSON.stringify(meta), "utf-8");
  const head = Buffer.alloc(8);
  head.write(MAGIC, 0, "latin1");
  head.writeUInt32LE(json.length, 4);
  const total = params.reduce((a, p) => a + p.size, 0);
  const body = Buffer.alloc(total * 4);
  let off = 0;
  for (const p of params) {
    for (let i = 0; i < p.size; i++) {
      body.writeFloatLE(p.data[i], off);
      off += 4;
    }
  }
  fs.writeFileSync(path, Buffer.concat([head, json, body]));
}

export function loadCheckpoint(path: string): {
  meta: CheckpointMeta; net: UNet3D;
} {
  const buf = fs.readFileSync(path);
  if (buf.length < 8 || buf.toString("latin1", 0, 4) !== MAGIC) {
    throw new Error(`${path}: not a trainer checkpoint`);
  }
  const jsonLen = buf.readUInt32LE(4);
  const meta = JSON.parse(buf.toString("utf-8", 8, 8 + jsonLen)) as CheckpointMeta;
  const net = new UNet3D(meta.config, 0);
  const params = net.params();
  if (params.length !== meta.shapes.length) {
    throw new Error(`${path}: checkpoint has ${meta.shapes.length} tensors, ` +
                    `network expects ${params.length}`);
  }
  let off = 8 + jsonLen;
  for (const p of params) {
    const need = off + p.size * 4;
    if (buf.length < need) throw new Error(`${path}: truncated checkpoint`);
    for (let i = 0; i < p.size; i++) {
      p.data[i] = buf.readFloatLE(off);
      off += 4;
    }
  }
  return { meta, net };
}

export function setTrainable(params: Tensor[], trainable: boolean): void {
  for (const p of params) p.requiresGrad = trainable;
}
