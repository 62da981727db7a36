// Console wiring: form submit starts a session, the event stream drives
// re-renders, the sidebar lists the registry.

import { createSession, createUploadSession, fetchTools } from './api.js';
import { renderSession, renderStatus, renderToolPanel } from './render.js';
import { eventSourceConnector, followSession } from './stream.js';
import { buildToolPanel } from './toolpanel.js';
import type { UiSessionView } from './types.js';

const BASE_URL = '';

function byId<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

async function loadTools(): Promise<void> {
  const panel = byId<HTMLDivElement>('tool-panel');
  try {
    renderToolPanel(panel, buildToolPanel(await fetchTools(BASE_URL)));
  } catch (err) {
    panel.textContent = `tools unavailable: ${String(err)}`;
  }
}

interface ActiveSession {
  question: string;
  view: UiSessionView | null;
  close: () => void;
}

let active: ActiveSession | null = null;

function rerender(): void {
  if (!active?.view) return;
  const cleanView = byId<HTMLInputElement>('clean-toggle').checked;
  renderSession(byId('timeline'), active.view, { question: active.question, cleanView });
  renderStatus(byId('status'), active.view);
}

async function startSession(event: Event): Promise<void> {
  event.preventDefault();
  const question = byId<HTMLInputElement>('question').value.trim();
  const audioPath = byId<HTMLInputElement>('audio-path').value.trim();
  const fileInput = byId<HTMLInputElement>('audio-file');
  const choicesRaw = byId<HTMLInputElement>('choices').value.trim();
  const errorNode = byId('form-error');
  errorNode.textContent = '';
  if (!question) {
    errorNode.textContent = 'a question is required';
    return;
  }
  const choices = choicesRaw ? choicesRaw.split('|').map((c) => c.trim()).filter(Boolean) : undefined;

  active?.close();
  try {
    let sessionId: string;
    if (fileInput.files && fileInput.files.length > 0) {
      sessionId = await createUploadSession(BASE_URL, fileInput.files[0], question, choices);
    } else if (audioPath) {
      sessionId = await createSession(BASE_URL, { audio: audioPath, question, choices });
    } else {
      errorNode.textContent = 'provide a server-side audio path or upload a file';
      return;
    }
    const handle = followSession(
      sessionId,
      eventSourceConnector(BASE_URL, sessionId),
      (view) => {
        if (active) {
          active.view = view;
          rerender();
        }
      },
      { retryDelayMs: 1500 },
    );
    active = { question, view: null, close: () => handle.close() };
    handle.done.catch((err) => {
      errorNode.textContent = `connection lost: ${String(err)} — resubmit to retry`;
    });
  } catch (err) {
    errorNode.textContent = String(err);
  }
}

function init(): void {
  byId<HTMLFormElement>('session-form').addEventListener('submit', (e) => void startSession(e));
  byId<HTMLInputElement>('clean-toggle').addEventListener('change', rerender);
  void loadTools();
}

document.addEventListener('DOMContentLoaded', init);
