// View model for the registered-tools sidebar.

import type { ToolInfo } from './types.js';

export const DESCRIPTION_LIMIT = 160;

export interface ToolCardModel {
  name: string;
  kindBadge: string;
  shortDescription: string;
  fullDescription: string;
  truncated: boolean;
}

export interface ToolPanelModel {
  empty: boolean;
  cards: ToolCardModel[];
}

export function buildToolPanel(tools: ToolInfo[], limit = DESCRIPTION_LIMIT): ToolPanelModel {
  const cards = tools.map((tool) => {
    const truncated = tool.description.length > limit;
    return {
      name: tool.name,
      kindBadge: tool.kind,
      shortDescription: truncated ? tool.description.slice(0, limit - 1).trimEnd() + '…' : tool.description,
      fullDescription: tool.description,
      truncated,
    };
  });
  return { empty: cards.length === 0, cards };
}
