// The debounce contract behind both sliders: a drag emits at most one
// request per window, with the latest value.

import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";
import { debounce } from "../src/debounce";

describe("debounce", () => {
  beforeEach(() => vi.useFakeTimers());
  afterEach(() => vi.useRealTimers());

  it("a burst inside one window emits exactly once, with the last value", () => {
    const fn = vi.fn();
    const d = debounce(fn, 250);
    for (let i = 0; i <= 10; i++) {
      d(i / 10);
      vi.advanceTimersByTime(20);
    }
    expect(fn).not.toHaveBeenCalled();
    vi.advanceTimersByTime(250);
    expect(fn).toHaveBeenCalledTimes(1);
    expect(fn).toHaveBeenCalledWith(1.0);
  });

  it("separate windows emit separately", () => {
    const fn = vi.fn();
    const d = debounce(fn, 250);
    d("a");
    vi.advanceTimersByTime(300);
    d("b");
    vi.advanceTimersByTime(300);
    expect(fn.mock.calls).toEqual([["a"], ["b"]]);
  });
});
