// Wire types mirroring the serve API. The console is a pure consumer: it
// renders what the stream says and duplicates no session logic.

export type EventKind =
  | 'session_started'
  | 'assistant_text'
  | 'tool_call_started'
  | 'tool_result'
  | 'answer'
  | 'session_ended';

export interface SessionEvent {
  session_id: string;
  sequence: number;
  event_kind: EventKind;
  payload: Record<string, unknown>;
}

export interface ToolInfo {
  name: string;
  kind: string;
  description: string;
}

export type SessionStatus = 'running' | 'answered' | 'budget_exhausted' | 'error';

export interface AssistantEntry {
  kind: 'assistant';
  sequence: number;
  text: string;
  cleanText: string;
}

export interface ToolCardEntry {
  kind: 'tool';
  sequence: number;
  toolName: string;
  prompt: string;
  audioRefs: string[];
  pending: boolean;
  resultText?: string;
  latency?: number;
  attempts?: number;
  refusal?: boolean;
  error?: string;
}

export type TimelineEntry = AssistantEntry | ToolCardEntry;

export interface UiSessionView {
  sessionId: string;
  status: SessionStatus;
  timeline: TimelineEntry[];
  answer?: string;
  toolCallCount?: number;
  budget?: number;
}
