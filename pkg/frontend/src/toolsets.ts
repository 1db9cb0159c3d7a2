import type { StageId } from './types.js';

/**
 * The tools valid for each stage; matches the representation the stage
 * edits (sketch tools for ink, palette tools for color, rig controls for
 * lighting) and is identical to the set the server accepts.
 */
const TOOLSETS: Record<StageId, readonly string[]> = {
  Viewpoint: ['pick_candidate', 'regenerate'],
  Composition: ['draw', 'erase', 'lasso', 'mask_edit', 'ai_cleanup'],
  Color: ['palette_editor', 'brush_fill', 'ai_fill'],
  Lighting: ['light_rig_editor', 'vibe_preset'],
  Style: ['preset_picker', 'apply'],
};

export function stageToolset(stage: StageId): readonly string[] {
  return TOOLSETS[stage];
}
