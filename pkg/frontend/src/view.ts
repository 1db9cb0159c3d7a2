import { stageToolset } from './toolsets.js';
import type { StageId, WorkspaceState } from './types.js';
import { STAGE_ORDER } from './types.js';
import type { WorkspaceStore } from './store.js';

/** Flattened row for the branch/history sidebar. */
export interface BranchRow {
  label: string;
  head: number;
  active: boolean;
}

export function branchRows(state: WorkspaceState): BranchRow[] {
  return state.branchTree.map((b) => ({
    label: `${b.name} @ ${b.head}`,
    head: b.head,
    active: b.active,
  }));
}

export interface ToolButton {
  tool: string;
  enabled: boolean;
}

/** Toolbar model for one stage tab; locked stages disable their tools. */
export function toolbarModel(store: WorkspaceStore, stage: StageId): ToolButton[] {
  return stageToolset(stage).map((tool) => ({
    tool,
    enabled: store.isToolEnabled(stage, tool),
  }));
}

export interface StageTab {
  stage: StageId;
  active: boolean;
  dirty: boolean;
  lockCount: number;
}

export function stageTabs(state: WorkspaceState): StageTab[] {
  return STAGE_ORDER.map((stage) => ({
    stage,
    active: state.activeStage === stage,
    dirty: state.stages[stage].dirty,
    lockCount: state.stages[stage].lockOverlays.length,
  }));
}

/** Non-modal warning badge text, or null when the last edit stayed in scope. */
export function warningBadge(state: WorkspaceState): string | null {
  if (!state.warning) return null;
  const pct = (state.warning.report.changed_fraction * 100).toFixed(1);
  return `Edit changed ${pct}% of out-of-scope pixels - click to revert`;
}
