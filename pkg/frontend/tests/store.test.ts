import { describe, expect, it } from "vitest";
import { createStore } from "../src/store";

describe("createStore", () => {
  it("starts unfiltered and unselected", () => {
    expect(createStore().get()).toEqual({ filterSymbol: null, selectedId: null });
  });

  it("notifies subscribers on every change", () => {
    const store = createStore();
    const seen: (number | null)[] = [];
    store.subscribe((s) => seen.push(s.filterSymbol));
    store.set({ filterSymbol: 227 });
    store.set({ filterSymbol: null });
    expect(seen).toEqual([227, null]);
  });

  it("toggles the filter off when the active symbol is clicked again", () => {
    const store = createStore();
    store.toggleFilter(5);
    expect(store.get().filterSymbol).toBe(5);
    store.toggleFilter(9);
    expect(store.get().filterSymbol).toBe(9);
    store.toggleFilter(9);
    expect(store.get().filterSymbol).toBeNull();
  });

  it("toggles record selection the same way", () => {
    const store = createStore();
    store.toggleSelection(3);
    store.toggleSelection(3);
    expect(store.get().selectedId).toBeNull();
  });

  it("is reversible to the initial state", () => {
    const store = createStore();
    const initial = store.get();
    store.set({ filterSymbol: 12, selectedId: 7 });
    store.set({ filterSymbol: null, selectedId: null });
    expect(store.get()).toEqual(initial);
  });

  it("stops notifying after unsubscribe", () => {
    const store = createStore();
    let calls = 0;
    const unsubscribe = store.subscribe(() => calls++);
    store.set({ selectedId: 1 });
    unsubscribe();
    store.set({ selectedId: 2 });
    expect(calls).toBe(1);
  });
});
