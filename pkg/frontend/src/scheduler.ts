// Debounced single-flight requester. Rapid consecutive edits collapse into
// one request, and when edits overtake an in-flight request the stale result
// is discarded: only the newest ticket may publish (last-write-wins).

export class DebouncedRequester<T> {
  private timer: ReturnType<typeof setTimeout> | null = null;
  private ticket = 0;
  private inflight: Promise<void> = Promise.resolve();

  constructor(
    private readonly delayMs: number,
    private readonly run: () => Promise<T>,
    private readonly publish: (result: T) => void,
    private readonly fail: (error: unknown) => void,
  ) {}

  schedule(): void {
    if (this.timer !== null) clearTimeout(this.timer);
    const ticket = ++this.ticket;
    this.timer = setTimeout(() => {
      this.timer = null;
      this.inflight = this.inflight.then(() => this.fire(ticket));
    }, this.delayMs);
  }

  /** Skip the delay; used by explicit retry buttons. */
  now(): void {
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
    const ticket = ++this.ticket;
    this.inflight = this.inflight.then(() => this.fire(ticket));
  }

  /**
   * Resolves once in-flight work has drained.  A still-pending debounce
   * delay is the caller's to advance (tests drive fake timers).
   */
  async settled(): Promise<void> {
    await this.inflight;
  }

  private async fire(ticket: number): Promise<void> {
    let result: T;
    try {
      result = await this.run();
    } catch (error) {
      if (ticket === this.ticket) this.fail(error);
      return;
    }
    if (ticket !== this.ticket) return; // superseded while in flight
    this.publish(result);
  }
}
