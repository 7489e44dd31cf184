/** Observation form validation: checked locally before any request goes out. */

import type { ObservationForm } from "./types.js";

const CATEGORIES = new Set(["environment", "agent", "motion"]);

export function validateObservation(form: ObservationForm): string | null {
  if (!form.category) {
    return "select a category";
  }
  if (!CATEGORIES.has(form.category)) {
    return `unknown category: ${form.category}`;
  }
  if (!form.text || form.text.trim().length === 0) {
    return "observation text must be non-empty";
  }
  return null;
}
