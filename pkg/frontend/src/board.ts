// Pure model of the virtual board.  Tokens and pots are physical objects:
// each lives either in the tray or on exactly one reader.  Every mutation
// returns the reader-state messages that must be POSTed to the gateway so
// callers can keep the board and the gateway in lockstep.

import type { ReaderStateBody } from './types.js';

export interface ReaderSlot {
  readerId: string;
  pot: string | null;
  tokens: Set<string>;
}

export interface ReaderUpdate {
  readerId: string;
  state: ReaderStateBody;
}

export class BoardError extends Error {}

export class Board {
  readonly readers = new Map<string, ReaderSlot>();
  private readonly tokenLocation = new Map<string, string>(); // token -> reader
  private readonly potLocation = new Map<string, string>(); // pot -> reader
  private clock = 0;

  constructor(readerIds: string[], private readonly now: () => number = Date.now) {
    for (const id of readerIds) {
      this.readers.set(id, { readerId: id, pot: null, tokens: new Set() });
    }
  }

  private slot(readerId: string): ReaderSlot {
    const slot = this.readers.get(readerId);
    if (!slot) throw new BoardError(`unknown reader '${readerId}'`);
    return slot;
  }

  /** Monotonic even when the wall clock stalls within a millisecond. */
  private tick(): number {
    this.clock = Math.max(this.clock + 1, this.now() * 1000);
    return this.clock;
  }

  private stateOf(slot: ReaderSlot): ReaderStateBody {
    return { ts: this.tick(), pot: slot.pot, tokens: [...slot.tokens].sort() };
  }

  tokenReader(tokenId: string): string | null {
    return this.tokenLocation.get(tokenId) ?? null;
  }

  potReader(potId: string): string | null {
    return this.potLocation.get(potId) ?? null;
  }

  /** Place a token on a reader, lifting it off its previous reader first. */
  placeToken(tokenId: string, readerId: string): ReaderUpdate[] {
    const target = this.slot(readerId);
    if (target.tokens.has(tokenId)) return [];
    const updates: ReaderUpdate[] = [];
    const from = this.tokenLocation.get(tokenId);
    if (from !== undefined) {
      const source = this.slot(from);
      source.tokens.delete(tokenId);
      updates.push({ readerId: from, state: this.stateOf(source) });
    }
    target.tokens.add(tokenId);
    this.tokenLocation.set(tokenId, readerId);
    updates.push({ readerId, state: this.stateOf(target) });
    return updates;
  }

  /** Return a token to the tray. */
  removeToken(tokenId: string): ReaderUpdate[] {
    const from = this.tokenLocation.get(tokenId);
    if (from === undefined) return [];
    const source = this.slot(from);
    source.tokens.delete(tokenId);
    this.tokenLocation.delete(tokenId);
    return [{ readerId: from, state: this.stateOf(source) }];
  }

  /** Drop a pot onto a reader; a reader holds at most one pot. */
  placePot(potId: string, readerId: string): ReaderUpdate[] {
    const target = this.slot(readerId);
    if (target.pot === potId) return [];
    if (target.pot !== null) {
      throw new BoardError(`reader '${readerId}' already holds pot '${target.pot}'`);
    }
    const updates: ReaderUpdate[] = [];
    const from = this.potLocation.get(potId);
    if (from !== undefined) {
      const source = this.slot(from);
      source.pot = null;
      updates.push({ readerId: from, state: this.stateOf(source) });
    }
    target.pot = potId;
    this.potLocation.set(potId, readerId);
    updates.push({ readerId, state: this.stateOf(target) });
    return updates;
  }

  /** Return a pot to the tray. */
  removePot(potId: string): ReaderUpdate[] {
    const from = this.potLocation.get(potId);
    if (from === undefined) return [];
    const source = this.slot(from);
    source.pot = null;
    this.potLocation.delete(potId);
    return [{ readerId: from, state: this.stateOf(source) }];
  }

  /** Objects not currently on any reader. */
  tray(tokenIds: string[], potIds: string[]): { tokens: string[]; pots: string[] } {
    return {
      tokens: tokenIds.filter((t) => !this.tokenLocation.has(t)).sort(),
      pots: potIds.filter((p) => !this.potLocation.has(p)).sort(),
    };
  }
}
