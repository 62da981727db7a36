// Thin fetch wrappers over the serve API.

import type { ToolInfo } from './types.js';

export interface CreateSessionBody {
  audio: string | string[];
  question: string;
  choices?: string[];
  seed?: number;
}

export async function createSession(baseUrl: string, body: CreateSessionBody): Promise<string> {
  const resp = await fetch(`${baseUrl}/sessions`, {
    method: 'POST',
    headers: { 'content-type': 'application/json' },
    body: JSON.stringify(body),
  });
  if (!resp.ok) {
    throw new Error(`session create failed: ${resp.status} ${await resp.text()}`);
  }
  const data = (await resp.json()) as { session_id: string };
  return data.session_id;
}

export async function createUploadSession(
  baseUrl: string,
  file: File,
  question: string,
  choices?: string[],
): Promise<string> {
  const form = new FormData();
  form.append('file', file);
  form.append('question', question);
  if (choices && choices.length) form.append('choices', JSON.stringify(choices));
  const resp = await fetch(`${baseUrl}/sessions/upload`, { method: 'POST', body: form });
  if (!resp.ok) {
    throw new Error(`upload failed: ${resp.status} ${await resp.text()}`);
  }
  const data = (await resp.json()) as { session_id: string };
  return data.session_id;
}

export async function fetchTools(baseUrl: string): Promise<ToolInfo[]> {
  const resp = await fetch(`${baseUrl}/tools`);
  if (!resp.ok) {
    throw new Error(`tool listing failed: ${resp.status}`);
  }
  const data = (await resp.json()) as { tools: ToolInfo[] };
  return data.tools;
}
