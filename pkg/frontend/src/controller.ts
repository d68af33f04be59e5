// Orchestration between the editor state, the API client, and whatever
// renders the result. Kept free of DOM concerns so the whole interaction
// loop is testable: the view is an interface, requests flow through the
// debounced requester, and chart series are passed through verbatim from
// prediction responses.

import {
  ApiClient,
  ModelInfo,
  PredictRequest,
  PredictResponse,
  TraceDetail,
} from "./api";
import { ChartModel, ChartSeries } from "./chart";
import { queryGrid } from "./grid";
import { DebouncedRequester } from "./scheduler";
import {
  PlanEditorState,
  addAction,
  emptyState,
  forTrace,
  moveAction,
  removeAction,
  toggleFactual,
} from "./state";

export interface View {
  renderPlan(state: PlanEditorState): void;
  renderChart(model: ChartModel): void;
  showError(message: string): void;
  clearError(): void;
}

interface QueryResult {
  counterfactual: PredictResponse;
  factual: PredictResponse | null;
}

function errorText(error: unknown): string {
  return error instanceof Error ? error.message : String(error);
}

export class WhatIfController {
  private state: PlanEditorState = emptyState();
  private trace: TraceDetail | null = null;
  private readonly requester: DebouncedRequester<QueryResult>;

  constructor(
    private readonly client: ApiClient,
    private readonly view: View,
    debounceMs = 250,
  ) {
    this.requester = new DebouncedRequester<QueryResult>(
      debounceMs,
      () => this.query(),
      (result) => this.applyResult(result),
      // On failure the previous chart stays up; only the banner changes.
      (error) => this.view.showError(errorText(error)),
    );
  }

  get planState(): PlanEditorState {
    return this.state;
  }

  get currentTrace(): TraceDetail | null {
    return this.trace;
  }

  async loadModel(): Promise<ModelInfo> {
    return this.client.getModel();
  }

  async selectTrace(id: string): Promise<void> {
    const trace = await this.client.getTrace(id);
    this.trace = trace;
    this.state = forTrace(trace.id, trace.default_cut, trace.tau);
    this.view.renderPlan(this.state);
    this.requester.now();
  }

  addAction(type: string, time: number): void {
    this.edit(addAction(this.state, type, time));
  }

  moveAction(id: number, time: number): void {
    this.edit(moveAction(this.state, id, time));
  }

  removeAction(id: number): void {
    this.edit(removeAction(this.state, id));
  }

  toggleFactual(): void {
    this.edit(toggleFactual(this.state));
  }

  retry(): void {
    this.requester.now();
  }

  /** Test hook: drains in-flight work (pending delays excluded). */
  async settled(): Promise<void> {
    await this.requester.settled();
  }

  private edit(next: PlanEditorState): void {
    this.state = next;
    this.view.renderPlan(next);
    this.requester.schedule();
  }

  /** The trace's own actions after the cut: the factual comparison plan. */
  private factualActions(): { type: string; time: number }[] {
    const trace = this.trace;
    if (!trace) return [];
    return trace.events
      .filter((ev) => ev.a != null && ev.t > this.state.cutTime)
      .map((ev) => ({ type: ev.a as string, time: ev.t }));
  }

  private predictRequest(actions: { type: string; time: number }[]): PredictRequest {
    const trace = this.trace;
    if (!trace) throw new Error("no trace selected");
    return {
      history: {
        events: trace.events.filter((ev) => ev.t <= this.state.cutTime),
        cut_time: this.state.cutTime,
      },
      plan: { actions },
      query_times: queryGrid(this.state.cutTime, this.state.tau),
      mode: "mixture",
    };
  }

  private async query(): Promise<QueryResult> {
    const planned = this.state.actions.map(({ type, time }) => ({ type, time }));
    const counterfactual = await this.client.predict(this.predictRequest(planned));
    const factual = this.state.showFactual
      ? await this.client.predict(this.predictRequest(this.factualActions()))
      : null;
    return { counterfactual, factual };
  }

  private applyResult(result: QueryResult): void {
    this.view.clearError();
    this.view.renderChart(this.chartModel(result));
  }

  private chartModel(result: QueryResult): ChartModel {
    const trace = this.trace;
    if (!trace) throw new Error("no trace selected");

    const history = trace.events
      .filter((ev) => ev.y != null)
      .map((ev) => ({ t: ev.t, y: ev.y as number }));

    const markers = [
      ...trace.events
        .filter((ev) => ev.a != null)
        .map((ev) => ({ t: ev.t, type: ev.a as string, planned: false })),
      ...this.state.actions.map((a) => ({ t: a.time, type: a.type, planned: true })),
    ];

    // Series arrays come straight off the responses; the chart never
    // recomputes or fabricates values.
    const series: ChartSeries[] = [];
    if (result.factual) {
      series.push({
        label: "factual",
        times: result.factual.times,
        mean: result.factual.mean,
        lower95: result.factual.lower95,
        upper95: result.factual.upper95,
      });
    }
    series.push({
      label: "counterfactual",
      times: result.counterfactual.times,
      mean: result.counterfactual.mean,
      lower95: result.counterfactual.lower95,
      upper95: result.counterfactual.upper95,
    });

    return {
      cutTime: this.state.cutTime,
      tau: this.state.tau,
      history,
      markers,
      series,
    };
  }
}
