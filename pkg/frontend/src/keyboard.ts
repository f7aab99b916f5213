/**
 * Global keyboard shortcuts, skipped while typing in form fields.
 */

const IGNORED_TAGS = new Set(["INPUT", "TEXTAREA", "SELECT"]);

export type KeyBindings = Record<string, (event: KeyboardEvent) => void>;

/**
 * Listen for keydown on `target` and dispatch through `bindings()`.
 * Bindings are looked up per event so views can swap them as state changes.
 * Returns the detach function.
 */
export function attachKeyboard(target: EventTarget, bindings: () => KeyBindings): () => void {
  const handler = (event: Event) => {
    const keyEvent = event as KeyboardEvent;
    const element = keyEvent.target as HTMLElement | null;
    if (element && (IGNORED_TAGS.has(element.tagName) || element.isContentEditable)) return;
    if (keyEvent.ctrlKey || keyEvent.metaKey || keyEvent.altKey) return;
    const action = bindings()[keyEvent.key.toLowerCase()];
    if (action) {
      keyEvent.preventDefault();
      action(keyEvent);
    }
  };
  target.addEventListener("keydown", handler);
  return () => target.removeEventListener("keydown", handler);
}
