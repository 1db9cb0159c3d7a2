import type { CreoClient } from './api.js';
import { stageToolset } from './toolsets.js';
import type {
  BranchSummary,
  EditAck,
  EditRequest,
  SessionInfo,
  StageId,
  StageView,
  WorkspaceState,
} from './types.js';
import { STAGE_ORDER } from './types.js';

export type StoreListener = (state: WorkspaceState) => void;

function emptyStageView(stage: StageId): StageView {
  return { stage, layerPng: null, toolset: stageToolset(stage), lockOverlays: [], dirty: false };
}

function branchSummaries(info: SessionInfo): BranchSummary[] {
  return Object.entries(info.branches)
    .map(([name, head]) => ({ name, head, active: name === info.active_branch }))
    .sort((a, b) => a.name.localeCompare(b.name));
}

/**
 * Client-side workspace over one session.
 *
 * Every committed frame comes from the server: an acknowledged edit
 * triggers a refetch of the preview and the edited stage layer for that
 * event id (poll-after-ack). The store never composites an authoritative
 * preview locally and never mutates locked regions optimistically. At most
 * one edit is in flight at a time, mirroring the server's single-writer
 * queue.
 */
export class WorkspaceStore {
  private state: WorkspaceState;
  private info: SessionInfo;
  private inFlight = false;
  private listeners = new Set<StoreListener>();

  constructor(
    private client: CreoClient,
    info: SessionInfo,
  ) {
    this.info = info;
    const stages = {} as Record<StageId, StageView>;
    for (const stage of STAGE_ORDER) stages[stage] = emptyStageView(stage);
    this.state = {
      activeStage: info.entry_mode === 'prompt_first' ? 'Viewpoint' : 'Composition',
      previewPng: null,
      previewEventId: null,
      branchTree: branchSummaries(info),
      stages,
      warning: null,
      dirty: false,
    };
    this.applyLocks(info);
  }

  get sessionId(): string {
    return this.info.session_id;
  }

  get snapshot(): WorkspaceState {
    return this.state;
  }

  get sessionInfo(): SessionInfo {
    return this.info;
  }

  get editInFlight(): boolean {
    return this.inFlight;
  }

  subscribe(listener: StoreListener): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }

  private emit(): void {
    for (const listener of this.listeners) listener(this.state);
  }

  private patch(partial: Partial<WorkspaceState>): void {
    this.state = { ...this.state, ...partial };
    this.emit();
  }

  private applyLocks(info: SessionInfo): void {
    const stages = { ...this.state.stages };
    for (const stage of STAGE_ORDER) {
      stages[stage] = {
        ...stages[stage],
        lockOverlays: info.locks.filter((l) => l.stage === stage).map((l) => l.lock_id),
      };
    }
    this.state = { ...this.state, stages };
  }

  /** Stage tabs are freely selectable; there is no entry-order gating. */
  selectStage(stage: StageId): void {
    this.patch({ activeStage: stage });
  }

  /** Tools on a fully locked stage are disabled client-side (and rejected
   * server-side regardless). */
  isToolEnabled(stage: StageId, tool: string): boolean {
    if (!stageToolset(stage).includes(tool)) return false;
    return !this.info.locks.some((l) => l.stage === stage && l.kind === 'stage');
  }

  /** Full sync: session info, preview, and the active stage layer. Clears
   * every dirty flag; stale non-active layers are dropped so nothing
   * unconfirmed can render. */
  async refresh(): Promise<void> {
    this.info = await this.client.getSession(this.sessionId);
    this.applyLocks(this.info);
    const preview = await this.client.previewPng(this.sessionId);
    const layer = await this.client.stagePng(this.sessionId, this.state.activeStage);
    const stages = { ...this.state.stages };
    for (const view of Object.values(stages)) {
      if (view.dirty) {
        stages[view.stage] = { ...view, layerPng: null, dirty: false };
      }
    }
    stages[this.state.activeStage] = {
      ...stages[this.state.activeStage],
      layerPng: layer,
      dirty: false,
    };
    this.patch({
      previewPng: preview,
      previewEventId: this.info.head,
      branchTree: branchSummaries(this.info),
      stages,
      dirty: false,
    });
  }

  /**
   * Submit one edit and sync from the acknowledgment: fetch the stage layer
   * and preview for the acknowledged event, surface any violation with a
   * one-click revert target. On a network failure the edit is marked dirty
   * and local state stays untouched until refresh() succeeds.
   */
  async submitEdit(edit: EditRequest): Promise<EditAck> {
    if (this.inFlight) {
      throw new Error('an edit is already in flight for this session');
    }
    this.inFlight = true;
    const previousHead = this.info.head;
    try {
      const ack = await this.client.submitEdit(this.sessionId, edit);
      await this.syncAfterEdit(edit.stage, ack, previousHead);
      return ack;
    } catch (error) {
      const stages = { ...this.state.stages };
      stages[edit.stage] = { ...stages[edit.stage], dirty: true };
      this.patch({ stages, dirty: true });
      throw error;
    } finally {
      this.inFlight = false;
    }
  }

  private async syncAfterEdit(stage: StageId, ack: EditAck, previousHead: number): Promise<void> {
    const [info, preview, layer] = await Promise.all([
      this.client.getSession(this.sessionId),
      this.client.previewPng(this.sessionId, { branch: ack.branch, eventId: ack.event_id }),
      this.client.stagePng(this.sessionId, stage, { branch: ack.branch, eventId: ack.event_id }),
    ]);
    this.info = info;
    this.applyLocks(info);
    const stages = { ...this.state.stages };
    stages[stage] = { ...stages[stage], layerPng: layer, dirty: false };
    this.patch({
      previewPng: preview,
      previewEventId: ack.event_id,
      branchTree: branchSummaries(info),
      stages,
      warning: ack.violation.violated
        ? { report: ack.violation, revertTo: previousHead }
        : null,
      dirty: false,
    });
  }

  /** One-click revert for a surfaced violation warning. */
  async revertWarning(): Promise<void> {
    const warning = this.state.warning;
    if (!warning) return;
    await this.client.revert(this.sessionId, warning.revertTo);
    this.patch({ warning: null });
    await this.refresh();
  }

  async revertTo(eventId: number, branch?: string): Promise<void> {
    await this.client.revert(this.sessionId, eventId, branch);
    await this.refresh();
  }

  async branchFrom(eventId: number, name: string): Promise<void> {
    await this.client.createBranch(this.sessionId, eventId, name);
    await this.refresh();
  }
}
