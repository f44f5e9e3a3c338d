/** Single UI store: the active symbol filter and record selection.

All interactive state lives here so every filter is trivially reversible:
setting a field back to null restores the unfiltered view.
*/

export interface UiState {
  filterSymbol: number | null;
  selectedId: number | null;
}

export type Listener = (state: UiState) => void;

export interface Store {
  get(): UiState;
  set(patch: Partial<UiState>): void;
  /** Toggle semantics: clicking the active symbol clears the filter. */
  toggleFilter(symbol: number): void;
  toggleSelection(id: number): void;
  subscribe(listener: Listener): () => void;
}

export function createStore(
  initial: UiState = { filterSymbol: null, selectedId: null },
): Store {
  let state = { ...initial };
  const listeners = new Set<Listener>();
  const notify = () => {
    for (const fn of listeners) fn(state);
  };
  return {
    get: () => state,
    set(patch) {
      state = { ...state, ...patch };
      notify();
    },
    toggleFilter(symbol) {
      state = {
        ...state,
        filterSymbol: state.filterSymbol === symbol ? null : symbol,
      };
      notify();
    },
    toggleSelection(id) {
      state = {
        ...state,
        selectedId: state.selectedId === id ? null : id,
      };
      notify();
    },
    subscribe(listener) {
      listeners.add(listener);
      return () => listeners.delete(listener);
    },
  };
}
