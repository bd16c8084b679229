// Session view-state: holds the latest service payloads and serializes label
// submission behind a pending lock so rapid clicks cannot double-post.

import { ApiClient, ConflictError } from "./api.js";
import { Label, Progress, QueryPayload } from "./types.js";

export class SessionState {
  query: QueryPayload | null = null;
  progress: Progress | null = null;
  error: string | null = null;
  private submitting = false;

  constructor(
    private api: ApiClient,
    public sessionId: string,
  ) {}

  get pendingLocked(): boolean {
    return this.submitting;
  }

  async refresh(): Promise<void> {
    this.query = await this.api.getQuery(this.sessionId);
    this.progress = this.query.progress;
    this.error = null;
  }

  /** Post a label for the pending query and advance to the next one.
   *
   * Returns false when the submission was skipped (no pending query, or a
   * submission is already in flight). State only advances on service
   * acknowledgment; a conflict refetches the pending query. */
  async submitAndAdvance(label: Label): Promise<boolean> {
    if (this.submitting) return false;
    const q = this.query;
    if (!q || q.status !== "active" || q.instance_id === undefined) return false;
    this.submitting = true;
    try {
      this.progress = await this.api.submitLabel(this.sessionId, q.instance_id, label);
      await this.refresh();
      return true;
    } catch (err) {
      if (err instanceof ConflictError) {
        await this.refresh();
        return false;
      }
      this.error = err instanceof Error ? err.message : String(err);
      return false;
    } finally {
      this.submitting = false;
    }
  }
}
