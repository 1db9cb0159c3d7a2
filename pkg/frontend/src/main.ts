/**
 * Browser shell: wires the workspace store to a minimal DOM. The logic all
 * lives in store.ts / view.ts; this file only renders and forwards clicks.
 */

import { CreoClient } from './api.js';
import { WorkspaceStore } from './store.js';
import { branchRows, stageTabs, toolbarModel, warningBadge } from './view.js';
import type { StageId, WorkspaceState } from './types.js';

function pngUrl(bytes: Uint8Array | null): string | null {
  if (!bytes) return null;
  const blob = new Blob([bytes.buffer as ArrayBuffer], { type: 'image/png' });
  return URL.createObjectURL(blob);
}

export async function mount(root: HTMLElement, baseUrl: string, prompt: string): Promise<WorkspaceStore> {
  const client = new CreoClient(baseUrl);
  const info = await client.createSession({ mode: 'prompt_first', prompt, n_viewpoints: 6 });
  const store = new WorkspaceStore(client, info);

  root.innerHTML = `
    <div class="creo">
      <nav class="stages"></nav>
      <div class="toolbar"></div>
      <div class="warning" hidden></div>
      <main class="canvas"><img class="layer" alt="stage layer"></main>
      <aside class="side">
        <img class="preview" alt="final preview">
        <ul class="branches"></ul>
      </aside>
    </div>`;

  const stagesEl = root.querySelector<HTMLElement>('.stages')!;
  const toolbarEl = root.querySelector<HTMLElement>('.toolbar')!;
  const warningEl = root.querySelector<HTMLElement>('.warning')!;
  const layerEl = root.querySelector<HTMLImageElement>('.layer')!;
  const previewEl = root.querySelector<HTMLImageElement>('.preview')!;
  const branchesEl = root.querySelector<HTMLElement>('.branches')!;

  function render(state: WorkspaceState): void {
    stagesEl.replaceChildren(
      ...stageTabs(state).map((tab) => {
        const button = document.createElement('button');
        button.textContent = tab.lockCount ? `${tab.stage} 🔒` : tab.stage;
        button.classList.toggle('active', tab.active);
        button.classList.toggle('dirty', tab.dirty);
        button.onclick = () => store.selectStage(tab.stage);
        return button;
      }),
    );
    toolbarEl.replaceChildren(
      ...toolbarModel(store, state.activeStage).map((entry) => {
        const button = document.createElement('button');
        button.textContent = entry.tool;
        button.disabled = !entry.enabled;
        return button;
      }),
    );
    const badge = warningBadge(state);
    warningEl.hidden = badge === null;
    warningEl.textContent = badge ?? '';
    warningEl.onclick = () => void store.revertWarning();

    const layerUrl = pngUrl(state.stages[state.activeStage].layerPng);
    if (layerUrl) layerEl.src = layerUrl;
    const previewUrl = pngUrl(state.previewPng);
    if (previewUrl) previewEl.src = previewUrl;

    branchesEl.replaceChildren(
      ...branchRows(state).map((row) => {
        const item = document.createElement('li');
        item.textContent = row.label;
        item.classList.toggle('active', row.active);
        item.onclick = () => void store.revertTo(row.head, row.active ? undefined : row.label.split(' @ ')[0]);
        return item;
      }),
    );
  }

  store.subscribe(render);
  await store.refresh();
  return store;
}

declare global {
  interface Window {
    creoMount?: typeof mount;
  }
}

if (typeof window !== 'undefined') {
  window.creoMount = mount;
}

export type { StageId };
