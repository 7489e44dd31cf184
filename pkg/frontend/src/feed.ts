/**
 * Alert feed state.
 *
 * The feed mirrors the server snapshot exactly (the RSU already returns
 * alerts reverse-chronologically) so the client never reorders anything;
 * an unchanged snapshot leaves the feed object identical, and genuinely new
 * alert ids surface at the top of the list.
 */

import type { AlertView } from "./types.js";

export interface FeedUpdate {
  alerts: AlertView[];
  newIds: string[];
  changed: boolean;
}

export function mergeAlerts(current: AlertView[], snapshot: AlertView[]): FeedUpdate {
  const currentIds = new Set(current.map((a) => a.alert_id));
  const newIds = snapshot.filter((a) => !currentIds.has(a.alert_id)).map((a) => a.alert_id);

  const sameOrder =
    current.length === snapshot.length &&
    current.every((a, i) => a.alert_id === snapshot[i].alert_id);
  if (sameOrder) {
    return { alerts: current, newIds: [], changed: false };
  }
  return { alerts: snapshot, newIds, changed: true };
}
