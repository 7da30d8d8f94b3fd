import { createInterface } from "node:readline";
import { parseArgs } from "node:util";
import { pathToFileURL } from "node:url";
import type { Readable, Writable } from "node:stream";

import { buildConfig, ConfigError } from "./config.js";
import type { DetectorModel } from "./model.js";
import {
  BadRequest,
  detectResponse,
  errorResponse,
  ocrResponse,
  parseRequest,
} from "./protocol.js";
import { loadRunnerModel } from "./runner.js";
import { StubModel } from "./stub.js";

/**
 * Sequential request loop: one response line per request line, written in
 * arrival order and flushed immediately. Malformed lines answer with a
 * bad_request error and the loop keeps going; end of input ends the
 * process cleanly.
 */
export async function serve(
  model: DetectorModel,
  input: Readable = process.stdin,
  output: Writable = process.stdout,
): Promise<void> {
  const lines = createInterface({ input, crlfDelay: Infinity });
  for await (const line of lines) {
    if (line.trim() === "") {
      continue;
    }
    let request;
    try {
      request = parseRequest(line);
    } catch (err) {
      const id = err instanceof BadRequest ? err.id : null;
      const message = err instanceof BadRequest ? err.message : String(err);
      output.write(errorResponse(id, "bad_request", message) + "\n");
      continue;
    }
    try {
      if (request.op === "detect") {
        const detections = await model.detect(request.task, request.imagePath);
        output.write(detectResponse(request.id, detections) + "\n");
      } else {
        const reading = await model.ocr(request.imagePath);
        output.write(ocrResponse(request.id, reading) + "\n");
      }
    } catch (err) {
      const message = err instanceof Error ? err.message : String(err);
      output.write(errorResponse(request.id, "model_error", message) + "\n");
    }
  }
}

export async function main(argv: string[] = process.argv.slice(2)): Promise<number> {
  let model: DetectorModel;
  try {
    const { values } = parseArgs({
      args: argv,
      options: {
        mode: { type: "string", default: "stub" },
        weights: { type: "string" },
        runner: { type: "string" },
        classes: { type: "string" },
      },
    });
    const config = buildConfig(values);
    model = config.mode === "stub"
      ? new StubModel(config.classMap)
      : await loadRunnerModel(config);
  } catch (err) {
    const message = err instanceof ConfigError ? err.message : String(err);
    process.stderr.write(`adapter: ${message}\n`);
    return 1;
  }
  await serve(model);
  return 0;
}

if (process.argv[1] && import.meta.url === pathToFileURL(process.argv[1]).href) {
  main().then(
    (code) => process.exit(code),
    (err) => {
      process.stderr.write(`adapter: ${err}\n`);
      process.exit(1);
    },
  );
}
