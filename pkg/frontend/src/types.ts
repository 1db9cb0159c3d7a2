/**
 * Shared types for the staged-ideation client.
 *
 * The server is the single source of truth: every committed frame the UI
 * shows comes back from GET preview.png after an acknowledged edit, never
 * from client-side compositing.
 */

export type StageId = 'Viewpoint' | 'Composition' | 'Color' | 'Lighting' | 'Style';

export const STAGE_ORDER: readonly StageId[] = [
  'Viewpoint',
  'Composition',
  'Color',
  'Lighting',
  'Style',
];

export interface ViolationReport {
  violated: boolean;
  changed_fraction: number;
  max_delta: number;
  offending_pixels: number;
}

export interface LockInfo {
  lock_id: string;
  stage: StageId;
  kind: 'stage' | 'region';
  /** Covered pixel count for region locks; null for stage locks. */
  pixels: number | null;
}

export interface SessionInfo {
  session_id: string;
  entry_mode: 'prompt_first' | 'image_first';
  prompt: string | null;
  canvas: { width: number; height: number };
  active_branch: string;
  branches: Record<string, number>;
  head: number;
  event_count: number;
  visited: StageId[];
  locks: LockInfo[];
  palette: Array<{ rgb: [number, number, number]; label: string }>;
  lights: Array<{ kind: string; azimuth: number; elevation: number; intensity: number }>;
  style: { preset: string; params: Record<string, number>; seed: number };
  /** Base64 PNG sketches, present on prompt-first sessions. */
  candidates?: string[];
}

export interface EditAck {
  event_id: number;
  branch: string;
  violation: ViolationReport;
}

export interface EditRequest {
  stage: StageId;
  tool: string;
  payload?: Record<string, unknown>;
  /** Base64 PNG mask scoping the edit. */
  mask_png?: string;
  seed?: number;
  branch?: string;
}

/** One stage tab: its layer image, tools, and lock overlays. */
export interface StageView {
  stage: StageId;
  /** Raw PNG bytes of the stage layer as served. */
  layerPng: Uint8Array | null;
  toolset: readonly string[];
  /** Lock ids the server reports as covering this stage. */
  lockOverlays: string[];
  /** True while an edit on this stage awaits its server round-trip. */
  dirty: boolean;
}

/** The whole workspace as last confirmed by the server. */
export interface WorkspaceState {
  activeStage: StageId;
  /** Raw PNG bytes of the composed preview at the acknowledged head. */
  previewPng: Uint8Array | null;
  /** Event id the preview corresponds to. */
  previewEventId: number | null;
  branchTree: BranchSummary[];
  stages: Record<StageId, StageView>;
  /** Violation from the last acknowledged edit, with its revert target. */
  warning: { report: ViolationReport; revertTo: number } | null;
  /** Set when a round-trip failed and a refetch is required. */
  dirty: boolean;
}

export interface BranchSummary {
  name: string;
  head: number;
  active: boolean;
}
