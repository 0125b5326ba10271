// Trailing debounce for navigate-triggered retrieval: wheel bursts collapse
// into one request carrying the final slice index.

export const NAVIGATE_DEBOUNCE_MS = 150;

export interface Debounced<A extends unknown[]> {
  call(...args: A): void;
  flush(): void;
  cancel(): void;
}

export function debounce<A extends unknown[]>(
  fn: (...args: A) => void,
  delayMs: number,
): Debounced<A> {
  let timer: ReturnType<typeof setTimeout> | null = null;
  let lastArgs: A | null = null;

  const fire = () => {
    timer = null;
    if (lastArgs !== null) {
      const args = lastArgs;
      lastArgs = null;
      fn(...args);
    }
  };

  return {
    call(...args: A) {
      lastArgs = args;
      if (timer !== null) clearTimeout(timer);
      timer = setTimeout(fire, delayMs);
    },
    flush() {
      if (timer !== null) {
        clearTimeout(timer);
        fire();
      }
    },
    cancel() {
      if (timer !== null) clearTimeout(timer);
      timer = null;
      lastArgs = null;
    },
  };
}
