// DOM rendering of a session view. Re-renders the whole timeline from the
// view model on every change; sessions are small (tag-protocol turns), so
// diffing buys nothing.

import type { ToolPanelModel } from './toolpanel.js';
import type { ToolCardEntry, UiSessionView } from './types.js';

const STATUS_LABELS: Record<string, string> = {
  running: 'running…',
  answered: 'answered',
  budget_exhausted: 'budget exhausted',
  error: 'agent error',
};

function el(tag: string, className: string, text?: string): HTMLElement {
  const node = document.createElement(tag);
  node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function renderToolCard(entry: ToolCardEntry): HTMLElement {
  const card = el('div', 'entry tool-card' + (entry.pending ? ' pending' : ''));
  const head = el('div', 'tool-head');
  head.appendChild(el('span', 'tool-name', entry.toolName));
  if (entry.pending) {
    head.appendChild(el('span', 'tool-status', 'calling…'));
  } else if (entry.error) {
    head.appendChild(el('span', 'tool-status error', 'error'));
  } else if (entry.refusal) {
    head.appendChild(el('span', 'tool-status refusal', 'refusal'));
  } else {
    const latency = entry.latency !== undefined ? `${entry.latency.toFixed(2)}s` : '';
    const attempts = entry.attempts !== undefined ? `attempts ${entry.attempts}` : '';
    head.appendChild(el('span', 'tool-status ok', [latency, attempts].filter(Boolean).join(' · ')));
  }
  card.appendChild(head);
  card.appendChild(el('div', 'tool-prompt', entry.prompt));
  if (entry.audioRefs.length) {
    card.appendChild(el('div', 'tool-audio', entry.audioRefs.join(', ')));
  }
  if (!entry.pending) {
    card.appendChild(el('div', 'tool-result', entry.error ?? entry.resultText ?? ''));
  }
  return card;
}

export function renderSession(
  container: HTMLElement,
  view: UiSessionView,
  options: { question: string; cleanView: boolean },
): void {
  container.replaceChildren();
  container.appendChild(el('div', 'entry user', options.question));
  for (const entry of view.timeline) {
    if (entry.kind === 'assistant') {
      const text = options.cleanView ? entry.cleanText : entry.text;
      if (text) container.appendChild(el('div', 'entry assistant', text));
    } else {
      container.appendChild(renderToolCard(entry));
    }
  }
  if (view.status === 'answered' && view.answer !== undefined) {
    container.appendChild(el('div', 'banner answer-banner', view.answer));
  } else if (view.status !== 'running') {
    container.appendChild(el('div', `banner status-banner ${view.status}`, STATUS_LABELS[view.status]));
  }
}

export function renderStatus(node: HTMLElement, view: UiSessionView): void {
  node.textContent = STATUS_LABELS[view.status] ?? view.status;
  node.dataset.status = view.status;
}

export function renderToolPanel(container: HTMLElement, panel: ToolPanelModel): void {
  container.replaceChildren();
  if (panel.empty) {
    container.appendChild(el('div', 'tool-panel-empty', 'no tools registered'));
    return;
  }
  for (const card of panel.cards) {
    const node = el('div', 'tool-panel-card');
    const head = el('div', 'tool-head');
    head.appendChild(el('span', 'tool-name', card.name));
    head.appendChild(el('span', `kind-badge kind-${card.kindBadge}`, card.kindBadge));
    node.appendChild(head);
    const description = el('div', 'tool-description', card.shortDescription);
    node.appendChild(description);
    if (card.truncated) {
      const expand = el('button', 'expand', 'more');
      let expanded = false;
      expand.addEventListener('click', () => {
        expanded = !expanded;
        description.textContent = expanded ? card.fullDescription : card.shortDescription;
        expand.textContent = expanded ? 'less' : 'more';
      });
      node.appendChild(expand);
    }
    container.appendChild(node);
  }
}
