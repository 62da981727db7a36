// Pure fold from a bag of session events to the rendered view model.
//
// Events may arrive in bursts, duplicated after a reconnect replay, or be
// appended out of order by a racy caller; buildView sorts and dedupes by
// sequence first, so the rendered timeline order always equals the event
// sequence order.

import type {
  AssistantEntry,
  SessionEvent,
  TimelineEntry,
  ToolCardEntry,
  UiSessionView,
} from './types.js';

const TAG_NOISE = /<tool_call>[\s\S]*?<\/tool_call>|<answer>[\s\S]*?<\/answer>|<tool_call>[\s\S]*$/g;

export function stripTagNoise(text: string): string {
  return text.replace(TAG_NOISE, ' ').replace(/\s+/g, ' ').trim();
}

export function orderedUnique(events: SessionEvent[]): SessionEvent[] {
  const bySequence = new Map<number, SessionEvent>();
  for (const event of events) {
    if (!bySequence.has(event.sequence)) {
      bySequence.set(event.sequence, event);
    }
  }
  return [...bySequence.values()].sort((a, b) => a.sequence - b.sequence);
}

export function buildView(sessionId: string, events: SessionEvent[]): UiSessionView {
  const view: UiSessionView = { sessionId, status: 'running', timeline: [] };
  for (const event of orderedUnique(events)) {
    applyEvent(view, event);
  }
  return view;
}

function applyEvent(view: UiSessionView, event: SessionEvent): void {
  const payload = event.payload;
  switch (event.event_kind) {
    case 'session_started': {
      view.budget = typeof payload.budget === 'number' ? payload.budget : undefined;
      break;
    }
    case 'assistant_text': {
      const text = String(payload.text ?? '');
      const entry: AssistantEntry = {
        kind: 'assistant',
        sequence: event.sequence,
        text,
        cleanText: stripTagNoise(text),
      };
      view.timeline.push(entry);
      break;
    }
    case 'tool_call_started': {
      const entry: ToolCardEntry = {
        kind: 'tool',
        sequence: event.sequence,
        toolName: String(payload.tool_name ?? ''),
        prompt: String(payload.prompt ?? ''),
        audioRefs: Array.isArray(payload.audio_refs) ? payload.audio_refs.map(String) : [],
        pending: true,
      };
      view.timeline.push(entry);
      break;
    }
    case 'tool_result': {
      const card = view.timeline.find(
        (e): e is ToolCardEntry =>
          e.kind === 'tool' && e.pending && e.toolName === String(payload.tool_name ?? ''),
      );
      if (card) {
        card.pending = false;
        card.resultText = String(payload.text ?? '');
        card.latency = typeof payload.latency === 'number' ? payload.latency : undefined;
        card.attempts = typeof payload.attempts === 'number' ? payload.attempts : undefined;
        card.refusal = Boolean(payload.refusal);
        card.error = payload.error == null ? undefined : String(payload.error);
      }
      break;
    }
    case 'answer': {
      view.answer = String(payload.text ?? '');
      break;
    }
    case 'session_ended': {
      const outcome = String(payload.outcome ?? 'agent_error');
      view.status =
        outcome === 'answered' ? 'answered' : outcome === 'budget_exhausted' ? 'budget_exhausted' : 'error';
      if (view.status !== 'answered') {
        view.answer = undefined; // exactly one answer banner, and only when answered
      }
      view.toolCallCount =
        typeof payload.tool_call_count === 'number' ? payload.tool_call_count : undefined;
      break;
    }
  }
}

export function timelineSequences(view: UiSessionView): number[] {
  return view.timeline.map((entry) => entry.sequence);
}
