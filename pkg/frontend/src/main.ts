/**
 * Browser entry point: wires the controls to the API client and the
 * pure render layer. Add `?fixtures=1` to the URL to run against the
 * recorded fixtures with no backend.
 */

import { ApiError, FixtureApi, ScenarioApi, type AnyApi } from "./api.js";
import {
  comparisonSvg,
  comparisonViews,
  corridorSvg,
  corridorView,
  historySvg,
  historyView,
} from "./render.js";
import { DraftStore } from "./state.js";
import type { NetworkSnapshot } from "./types.js";
import { HORIZON_CHOICES } from "./types.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

async function buildApi(): Promise<AnyApi> {
  if (new URLSearchParams(window.location.search).get("fixtures")) {
    const load = (name: string) => fetch(`fixtures/${name}.json`).then((r) => r.json());
    const [network, emptyScenario, oneEvent, history] = await Promise.all([
      load("network"),
      load("scenario_empty"),
      load("scenario_one_event"),
      load("history"),
    ]);
    return new FixtureApi(network, { [history.segment_id]: history }, {
      empty: emptyScenario,
      oneEvent,
    });
  }
  return new ScenarioApi("");
}

function showError(message: string | null): void {
  const banner = el<HTMLDivElement>("error-banner");
  banner.textContent = message ?? "";
  banner.hidden = message === null;
}

async function start(): Promise<void> {
  const api = await buildApi();
  const network: NetworkSnapshot = await api.getNetwork();

  const segmentSelect = el<HTMLSelectElement>("segment");
  for (const segment of network.segments) {
    const option = document.createElement("option");
    option.value = segment;
    option.textContent = segment;
    segmentSelect.appendChild(option);
  }

  const horizonSelect = el<HTMLSelectElement>("horizon");
  for (const h of HORIZON_CHOICES) {
    const option = document.createElement("option");
    option.value = String(h);
    option.textContent = `${h} steps (${h * network.calendar.step_minutes} min)`;
    horizonSelect.appendChild(option);
  }

  const anchorInput = el<HTMLInputElement>("anchor");
  anchorInput.value = network.calendar.end;

  const store = new DraftStore(network.calendar.end, 3);

  const renderDraft = (): void => {
    const list = el<HTMLUListElement>("draft-events");
    list.innerHTML = "";
    store.current.injected.forEach((event, index) => {
      const item = document.createElement("li");
      item.textContent = `${event.segment_id}: ${event.start} to ${event.end}`;
      const remove = document.createElement("button");
      remove.textContent = "remove";
      remove.onclick = () => {
        store.removeEvent(index);
        renderDraft();
      };
      item.appendChild(remove);
      list.appendChild(item);
    });
  };

  el<HTMLButtonElement>("add-event").onclick = () => {
    try {
      store.addEvent({
        segment_id: segmentSelect.value,
        start: el<HTMLInputElement>("event-start").value,
        end: el<HTMLInputElement>("event-end").value,
      });
      showError(null);
      renderDraft();
    } catch (error) {
      showError(error instanceof Error ? error.message : String(error));
    }
  };

  el<HTMLButtonElement>("submit").onclick = async () => {
    store.setAnchor(anchorInput.value);
    store.setHorizon(Number(horizonSelect.value));
    const result = await store.submit(api);
    if (result.kind === "stale") return; // superseded by a newer draft
    if (result.kind === "error") {
      showError(`${result.code}: ${result.message}`); // draft retained as-is
      return;
    }
    showError(null);
    const views = comparisonViews(result.response);
    el<HTMLDivElement>("corridor").innerHTML = corridorSvg(
      corridorView(result.response),
      network,
    );
    el<HTMLDivElement>("comparison").innerHTML = views
      .map(
        (view) =>
          `<figure><figcaption>${view.segmentId} (mean delta ` +
          `${view.meanDelta.toFixed(2)} MPH)</figcaption>${comparisonSvg(view)}</figure>`,
      )
      .join("");
  };

  el<HTMLButtonElement>("load-history").onclick = async () => {
    try {
      const history = await api.getHistory(segmentSelect.value);
      const view = historyView(history, network.events);
      el<HTMLDivElement>("history").innerHTML = historySvg(view);
      showError(null);
    } catch (error) {
      showError(error instanceof ApiError ? `${error.code}: ${error.message}` : String(error));
    }
  };

  renderDraft();
}

start().catch((error) => showError(String(error)));
