/** Polling loop with exponential backoff while the service is unreachable. */

export interface PollerOptions {
  intervalMs?: number;
  maxBackoffMs?: number;
  onDegraded?: (degraded: boolean) => void;
}

export class Poller {
  private timer: ReturnType<typeof setTimeout> | null = null;
  private stopped = true;
  private failures = 0;
  degraded = false;

  constructor(
    private readonly pollFn: () => Promise<unknown>,
    private readonly options: PollerOptions = {},
  ) {}

  private get interval(): number {
    return this.options.intervalMs ?? 2000;
  }

  private get delay(): number {
    if (this.failures === 0) return this.interval;
    const backoff = this.interval * 2 ** this.failures;
    return Math.min(backoff, this.options.maxBackoffMs ?? 30_000);
  }

  start(): void {
    if (!this.stopped) return;
    this.stopped = false;
    void this.tick();
  }

  stop(): void {
    this.stopped = true;
    if (this.timer !== null) clearTimeout(this.timer);
    this.timer = null;
  }

  private setDegraded(value: boolean): void {
    if (this.degraded !== value) {
      this.degraded = value;
      this.options.onDegraded?.(value);
    }
  }

  private async tick(): Promise<void> {
    if (this.stopped) return;
    try {
      await this.pollFn();
      this.failures = 0;
      this.setDegraded(false);
    } catch {
      this.failures += 1;
      this.setDegraded(true);
    }
    if (!this.stopped) {
      this.timer = setTimeout(() => void this.tick(), this.delay);
    }
  }
}
