import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import type { HistoryResponse, NetworkSnapshot, ScenarioResponse } from "../src/types.js";

const here = dirname(fileURLToPath(import.meta.url));

function load<T>(name: string): T {
  return JSON.parse(readFileSync(join(here, "..", "fixtures", `${name}.json`), "utf8")) as T;
}

export const networkFixture = (): NetworkSnapshot => load("network");
export const historyFixture = (): HistoryResponse => load("history");
export const emptyScenarioFixture = (): ScenarioResponse => load("scenario_empty");
export const oneEventScenarioFixture = (): ScenarioResponse => load("scenario_one_event");
