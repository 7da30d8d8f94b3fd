import { resolve } from "node:path";
import { pathToFileURL } from "node:url";

import type { AdapterConfig } from "./config.js";
import { ConfigError } from "./config.js";
import type { DetectorModel } from "./model.js";

/**
 * Weights-backed bridge: a runner module owns the actual inference.
 *
 * The module default-exports an async factory receiving {weightsPath,
 * classMap} and returning an object with detect(task, imagePath) and
 * ocr(imagePath). This keeps heavyweight model stacks out of the adapter
 * while the wire protocol and process lifecycle stay identical to stub
 * mode.
 */
export async function loadRunnerModel(config: AdapterConfig): Promise<DetectorModel> {
  if (!config.runnerModule) {
    throw new ConfigError("no runner module configured");
  }
  let mod: Record<string, unknown>;
  try {
    mod = await import(pathToFileURL(resolve(config.runnerModule)).href);
  } catch (err) {
    throw new ConfigError(`cannot load runner module ${config.runnerModule}: ${err}`);
  }
  const factory = mod.default;
  if (typeof factory !== "function") {
    throw new ConfigError("runner module must default-export a factory function");
  }
  const model = (await factory({
    weightsPath: config.weightsPath,
    classMap: config.classMap,
  })) as DetectorModel;
  if (typeof model?.detect !== "function" || typeof model?.ocr !== "function") {
    throw new ConfigError("runner factory must return {detect, ocr}");
  }
  return model;
}
