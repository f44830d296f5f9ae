/** CLI: `train` fits a network on generated pairs, `predict` runs the
 * predictor file protocol. Exit codes: 0 success, 1 usage, 2 runtime. */

import { parseArgs } from "node:util";

import { Role } from "./data.js";
import { predict } from "./serve.js";
import { trainNetwork } from "./train.js";

function usage(): void {
  console.error(`usage:
  trainer train --data <dir> --role s1|s2|d --out <ckpt> [--steps N]
                [--lr F] [--seed N] [--crop N] [--classes a,b,c]
                [--target-dice F] [--log-every N] [--max-samples N]
  trainer predict --checkpoint <ckpt> --out <nifti>
                  [--image <nifti>] [--cond <nifti>]`);
}

function runTrain(argv: string[]): number {
  const { values } = parseArgs({
    args: argv,
    options: {
      data: { type: "string" },
      role: { type: "string" },
      out: { type: "string" },
      steps: { type: "string", default: "500" },
      lr: { type: "string", default: "0.001" },
      seed: { type: "string", default: "0" },
      crop: { type: "string", default: "0" },
      classes: { type: "string" },
      "target-dice": { type: "string" },
      "log-every": { type: "string", default: "10" },
      "max-samples": { type: "string" },
    },
  });
  if (!values.data || !values.role || !values.out) {
    usage();
    return 1;
  }
  if (!["s1", "s2", "d"].includes(values.role)) {
    console.error(`unknown role ${values.role}`);
    return 1;
  }
  const result = trainNetwork({
    dataDir: values.data,
    role: values.role as Role,
    out: values.out,
    steps: parseInt(values.steps!, 10),
    lr: parseFloat(values.lr!),
    seed: parseInt(values.seed!, 10),
    crop: parseInt(values.crop!, 10),
    classIds: values.classes
      ? values.classes.split(",").map((v) => parseInt(v, 10))
      : undefined,
    targetDice: values["target-dice"]
      ? parseFloat(values["target-dice"])
      : undefined,
    logEvery: parseInt(values["log-every"]!, 10),
    maxSamples: values["max-samples"]
      ? parseInt(values["max-samples"], 10)
      : undefined,
  });
  console.log(`finished after ${result.steps} steps, ` +
              `best training dice ${result.bestDice.toFixed(4)}`);
  return 0;
}

function runPredict(argv: string[]): number {
  const { values } = parseArgs({
    args: argv,
    options: {
      checkpoint: { type: "string" },
      out: { type: "string" },
      image: { type: "string" },
      cond: { type: "string" },
    },
  });
  if (!values.checkpoint || !values.out) {
    usage();
    return 1;
  }
  predict(values.checkpoint, values.out, values.image, values.cond);
  return 0;
}

export function main(argv: string[]): number {
  const [command, ...rest] = argv;
  try {
    if (command === "train") return runTrain(rest);
    if (command === "predict") return runPredict(rest);
    usage();
    return 1;
  } catch (err) {
    console.error(`error: ${err instanceof Error ? err.message : err}`);
    return 2;
  }
}

const invoked = process.argv[1] ?? "";
if (invoked.endsWith("cli.js") || invoked.endsWith("cli.ts")) {
  process.exit(main(process.argv.slice(2)));
}
