import type { EditAck, EditRequest, SessionInfo, StageId } from './types.js';

export interface CreateSessionRequest {
  mode: 'prompt_first' | 'image_first';
  prompt?: string;
  /** Base64 PNG source image for image-first sessions. */
  image_png?: string;
  n_viewpoints?: number;
  seed?: number;
  canvas_size?: number;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    detail: string,
  ) {
    super(`${code}: ${detail}`);
  }
}

type FetchLike = typeof fetch;

/**
 * Thin typed wrapper over the session REST endpoints. All images travel as
 * PNG bytes; the client never composites its own authoritative frames.
 */
export class CreoClient {
  constructor(
    private baseUrl: string,
    private fetchImpl: FetchLike = fetch,
  ) {}

  private async request(path: string, init?: RequestInit): Promise<Response> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    if (!response.ok) {
      let code = `HTTP ${response.status}`;
      let detail = response.statusText;
      try {
        const body = (await response.json()) as { error?: string; detail?: string };
        code = body.error ?? code;
        detail = body.detail ?? detail;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(response.status, code, detail);
    }
    return response;
  }

  private async json<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.request(path, init);
    return (await response.json()) as T;
  }

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.json<T>(path, {
      method: 'POST',
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify(body),
    });
  }

  createSession(body: CreateSessionRequest): Promise<SessionInfo> {
    return this.post<SessionInfo>('/sessions', body);
  }

  getSession(sessionId: string): Promise<SessionInfo> {
    return this.json<SessionInfo>(`/sessions/${sessionId}`);
  }

  submitEdit(sessionId: string, edit: EditRequest): Promise<EditAck> {
    return this.post<EditAck>(`/sessions/${sessionId}/edits`, edit);
  }

  async previewPng(sessionId: string, opts?: { branch?: string; eventId?: number }): Promise<Uint8Array> {
    const params = new URLSearchParams();
    if (opts?.branch) params.set('branch', opts.branch);
    if (opts?.eventId !== undefined) params.set('event_id', String(opts.eventId));
    const query = params.size ? `?${params}` : '';
    const response = await this.request(`/sessions/${sessionId}/preview.png${query}`);
    return new Uint8Array(await response.arrayBuffer());
  }

  async stagePng(sessionId: string, stage: StageId, opts?: { branch?: string; eventId?: number }): Promise<Uint8Array> {
    const params = new URLSearchParams();
    if (opts?.branch) params.set('branch', opts.branch);
    if (opts?.eventId !== undefined) params.set('event_id', String(opts.eventId));
    const query = params.size ? `?${params}` : '';
    const response = await this.request(`/sessions/${sessionId}/stages/${stage}.png${query}`);
    return new Uint8Array(await response.arrayBuffer());
  }

  addLock(
    sessionId: string,
    body: { stage: StageId; kind: 'stage' | 'region'; mask_png?: string; branch?: string },
  ): Promise<{ lock_id: string; event_id: number }> {
    return this.post(`/sessions/${sessionId}/locks`, body);
  }

  async removeLock(sessionId: string, lockId: string): Promise<void> {
    await this.request(`/sessions/${sessionId}/locks/${encodeURIComponent(lockId)}`, {
      method: 'DELETE',
    });
  }

  createBranch(sessionId: string, fromEventId: number, name: string): Promise<{ branch: string; head: number }> {
    return this.post(`/sessions/${sessionId}/branches`, { from_event_id: fromEventId, name });
  }

  revert(sessionId: string, eventId: number, branch?: string): Promise<{ branch: string; head: number }> {
    return this.post(`/sessions/${sessionId}/revert`, { event_id: eventId, branch });
  }

  async exportArchive(sessionId: string): Promise<Uint8Array> {
    const response = await this.request(`/sessions/${sessionId}/export`);
    return new Uint8Array(await response.arrayBuffer());
  }
}
