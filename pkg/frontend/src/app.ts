// Browser entry point: wires the controller to real DOM controls.
// Everything interesting lives in the controller and its pure helpers;
// this layer only reflects state into elements and forwards events.

import { ApiClient } from "./api";
import { ChartModel, linearScale, renderChartSvg } from "./chart";
import { WhatIfController } from "./controller";
import { PlanEditorState, SNAP_STEP } from "./state";

const $ = <T extends HTMLElement>(selector: string): T => {
  const el = document.querySelector<T>(selector);
  if (!el) throw new Error(`missing element: ${selector}`);
  return el;
};

function planRow(action: { id: number; type: string; time: number }): string {
  return (
    `<li class="plan-row" data-action-id="${action.id}">` +
    `<span class="plan-type">${action.type}</span>` +
    `<input type="number" class="plan-time" step="${SNAP_STEP}" ` +
    `value="${action.time}"/>` +
    `<button type="button" class="plan-remove" title="remove">×</button>` +
    `</li>`
  );
}

async function boot(): Promise<void> {
  const chartHost = $("#chart");
  const planList = $("#plan-list");
  const palette = $("#palette");
  const traceSelect = $<HTMLSelectElement>("#trace-select");
  const factualToggle = $<HTMLInputElement>("#factual-toggle");
  const banner = $("#error-banner");
  const bannerText = $("#error-text");
  const retryButton = $("#retry");
  const classReadout = $("#class-readout");

  const client = new ApiClient("");
  let lastChart: ChartModel | null = null;

  const controller = new WhatIfController(client, {
    renderPlan(state: PlanEditorState): void {
      planList.innerHTML = state.actions.map(planRow).join("");
      factualToggle.checked = state.showFactual;
    },
    renderChart(model: ChartModel): void {
      lastChart = model;
      chartHost.innerHTML = renderChartSvg(model);
      bindMarkerDrag();
      const predict = client.log.filter((e) => e.kind === "predict").at(-1);
      if (predict) {
        const logPost = (predict.response as { class_log_posterior: number[] })
          .class_log_posterior;
        const probs = logPost.map((v) => Math.exp(v));
        classReadout.textContent =
          "class probabilities: " + probs.map((p) => p.toFixed(2)).join(", ");
      }
    },
    showError(message: string): void {
      bannerText.textContent = message;
      banner.hidden = false;
    },
    clearError(): void {
      banner.hidden = true;
    },
  });

  // Dragging a planned marker re-times the action along the x axis.
  function bindMarkerDrag(): void {
    const svg = chartHost.querySelector<SVGSVGElement>("svg");
    if (!svg || !lastChart) return;
    const model = lastChart;
    const markers = svg.querySelectorAll<SVGLineElement>(
      'line.action-marker[stroke-dasharray]',
    );
    const planned = controller.planState.actions;
    markers.forEach((line, index) => {
      const action = planned[index];
      if (!action) return;
      line.addEventListener("pointerdown", (down) => {
        down.preventDefault();
        const box = svg.getBoundingClientRect();
        const x = linearScale([0, model.tau], [46, box.width - 12]);
        const onMove = (move: PointerEvent): void => {
          controller.moveAction(action.id, x.invert(move.clientX - box.left));
        };
        const onUp = (): void => {
          window.removeEventListener("pointermove", onMove);
          window.removeEventListener("pointerup", onUp);
        };
        window.addEventListener("pointermove", onMove);
        window.addEventListener("pointerup", onUp);
      });
    });
  }

  planList.addEventListener("change", (event) => {
    const input = event.target as HTMLInputElement;
    if (!input.classList.contains("plan-time")) return;
    const row = input.closest<HTMLElement>("[data-action-id]");
    if (!row) return;
    controller.moveAction(Number(row.dataset.actionId), Number(input.value));
  });

  planList.addEventListener("click", (event) => {
    const button = event.target as HTMLElement;
    if (!button.classList.contains("plan-remove")) return;
    const row = button.closest<HTMLElement>("[data-action-id]");
    if (!row) return;
    controller.removeAction(Number(row.dataset.actionId));
  });

  factualToggle.addEventListener("change", () => controller.toggleFactual());
  retryButton.addEventListener("click", () => controller.retry());

  traceSelect.addEventListener("change", () => {
    void controller.selectTrace(traceSelect.value).catch((error) => {
      bannerText.textContent = String(error);
      banner.hidden = false;
    });
  });

  const info = await controller.loadModel();
  palette.innerHTML = info.action_types
    .map(
      (type) =>
        `<button type="button" class="palette-add" data-type="${type}">` +
        `+ ${type}</button>`,
    )
    .join("");
  palette.addEventListener("click", (event) => {
    const button = event.target as HTMLElement;
    const type = button.dataset?.type;
    if (!type) return;
    const state = controller.planState;
    // New actions land one hour after the cut by default.
    controller.addAction(type, state.cutTime + 1.0);
  });

  const traces = await client.listTraces();
  traceSelect.innerHTML = traces
    .map((t) => `<option value="${t.id}">${t.id} (${t.n_outcomes} obs)</option>`)
    .join("");
  if (traces.length) {
    const first = traces[0];
    if (first) await controller.selectTrace(first.id);
  }
}

void boot().catch((error) => {
  const banner = document.querySelector<HTMLElement>("#error-banner");
  const text = document.querySelector<HTMLElement>("#error-text");
  if (banner && text) {
    text.textContent = String(error);
    banner.hidden = false;
  }
});
