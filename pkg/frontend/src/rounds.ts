import { ServiceClient } from "./client.js";
import { RoundResult } from "./types.js";

/**
 * Round history behind the round scrubber. The store never holds anything
 * that cannot be refetched: `reconstruct` rebuilds it from the server's
 * round artifacts alone, which keeps the UI refresh-safe.
 */
export class RoundStore {
  private readonly rounds = new Map<number, RoundResult>();

  record(result: RoundResult): void {
    this.rounds.set(result.round, result);
  }

  get(round: number): RoundResult | undefined {
    return this.rounds.get(round);
  }

  latest(): RoundResult | undefined {
    if (this.rounds.size === 0) return undefined;
    return this.rounds.get(Math.max(...this.rounds.keys()));
  }

  list(): RoundResult[] {
    return [...this.rounds.values()].sort((a, b) => a.round - b.round);
  }

  static async reconstruct(client: ServiceClient, sessionId: string): Promise<RoundStore> {
    const store = new RoundStore();
    for (let round = 0; ; round++) {
      const result = await client.getSegmentation(sessionId, round);
      if (result === null || result.status !== "done") {
        break;
      }
      store.record(result);
    }
    return store;
  }
}
