import { existsSync, readFileSync } from "node:fs";

import type { ClassMap } from "./model.js";
import { DEFAULT_CLASS_MAP } from "./model.js";

export interface AdapterConfig {
  mode: "stub" | "weights";
  weightsPath?: string;
  runnerModule?: string;
  classMap: ClassMap;
}

export class ConfigError extends Error {}

export function buildConfig(args: {
  mode?: string;
  weights?: string;
  runner?: string;
  classes?: string;
}): AdapterConfig {
  const mode = args.mode ?? "stub";
  if (mode !== "stub" && mode !== "weights") {
    throw new ConfigError(`mode must be "stub" or "weights", got "${mode}"`);
  }
  let classMap: ClassMap = DEFAULT_CLASS_MAP;
  if (args.classes) {
    try {
      classMap = JSON.parse(readFileSync(args.classes, "utf-8")) as ClassMap;
    } catch (err) {
      throw new ConfigError(`cannot read class map ${args.classes}: ${err}`);
    }
  }
  const config: AdapterConfig = {
    mode,
    weightsPath: args.weights,
    runnerModule: args.runner,
    classMap,
  };
  validateConfig(config);
  return config;
}

export function validateConfig(config: AdapterConfig): void {
  if (config.mode === "weights") {
    if (!config.weightsPath) {
      throw new ConfigError("weights mode requires --weights <path>");
    }
    if (!existsSync(config.weightsPath)) {
      throw new ConfigError(`weights path does not exist: ${config.weightsPath}`);
    }
    if (!config.runnerModule) {
      throw new ConfigError("weights mode requires --runner <module.mjs>");
    }
  }
}
