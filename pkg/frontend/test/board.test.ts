import { describe, expect, it } from 'vitest';

import { Board, BoardError } from '../src/board.js';

function board(): Board {
  let t = 0;
  return new Board(['r1', 'r2'], () => ++t);
}

describe('Board', () => {
  it('placing a token emits one reader update with the token present', () => {
    const b = board();
    const updates = b.placeToken('tok-a', 'r1');
    expect(updates).toHaveLength(1);
    expect(updates[0].readerId).toBe('r1');
    expect(updates[0].state.tokens).toEqual(['tok-a']);
    expect(updates[0].state.pot).toBeNull();
    expect(b.tokenReader('tok-a')).toBe('r1');
  });

  it('placing the same token twice is a no-op', () => {
    const b = board();
    b.placeToken('tok-a', 'r1');
    expect(b.placeToken('tok-a', 'r1')).toEqual([]);
  });

  it('moving a token updates both readers, source first', () => {
    const b = board();
    b.placeToken('tok-a', 'r1');
    b.placeToken('tok-b', 'r1');
    const updates = b.placeToken('tok-a', 'r2');
    expect(updates.map((u) => u.readerId)).toEqual(['r1', 'r2']);
    expect(updates[0].state.tokens).toEqual(['tok-b']);
    expect(updates[1].state.tokens).toEqual(['tok-a']);
    expect(b.tokenReader('tok-a')).toBe('r2');
  });

  it('token lists are sorted regardless of placement order', () => {
    const b = board();
    b.placeToken('tok-z', 'r1');
    const [u] = b.placeToken('tok-a', 'r1');
    expect(u.state.tokens).toEqual(['tok-a', 'tok-z']);
  });

  it('removing a token returns it to the tray', () => {
    const b = board();
    b.placeToken('tok-a', 'r1');
    const [u] = b.removeToken('tok-a');
    expect(u.readerId).toBe('r1');
    expect(u.state.tokens).toEqual([]);
    expect(b.tokenReader('tok-a')).toBeNull();
    expect(b.removeToken('tok-a')).toEqual([]);
  });

  it('a reader holds at most one pot', () => {
    const b = board();
    b.placePot('pot-x', 'r1');
    expect(() => b.placePot('pot-y', 'r1')).toThrow(BoardError);
  });

  it('moving a pot clears the source reader', () => {
    const b = board();
    b.placePot('pot-x', 'r1');
    const updates = b.placePot('pot-x', 'r2');
    expect(updates.map((u) => u.readerId)).toEqual(['r1', 'r2']);
    expect(updates[0].state.pot).toBeNull();
    expect(updates[1].state.pot).toBe('pot-x');
  });

  it('unknown reader ids are rejected', () => {
    expect(() => board().placeToken('tok-a', 'nope')).toThrow(BoardError);
  });

  it('timestamps are strictly monotonic across updates', () => {
    const b = new Board(['r1', 'r2'], () => 0); // frozen wall clock
    const ts = [
      ...b.placeToken('tok-a', 'r1'),
      ...b.placePot('pot-x', 'r1'),
      ...b.placeToken('tok-a', 'r2'),
      ...b.removePot('pot-x'),
    ].map((u) => u.state.ts);
    for (let i = 1; i < ts.length; i++) expect(ts[i]).toBeGreaterThan(ts[i - 1]);
  });

  it('tray lists only unplaced objects', () => {
    const b = board();
    b.placeToken('tok-a', 'r1');
    b.placePot('pot-x', 'r2');
    expect(b.tray(['tok-a', 'tok-b'], ['pot-x', 'pot-y'])).toEqual({
      tokens: ['tok-b'],
      pots: ['pot-y'],
    });
  });
});
