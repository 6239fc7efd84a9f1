// Page controller: owns the board state, syncs it to the gateway, and
// re-renders on every change or pushed event.

import { GatewayClient } from './api.js';
import { Board, type ReaderUpdate } from './board.js';
import { subscribe } from './events.js';
import { render, type Snapshot } from './ui.js';
import type { ActivationState, AnomalyView, DeviceView, PotView, TokenView } from './types.js';

const READER_IDS = ['reader-1', 'reader-2', 'reader-3'];

export class Controller {
  readonly board = new Board(READER_IDS);
  readonly leds = new Map<string, boolean>();
  devices: DeviceView[] = [];
  tokens: TokenView[] = [];
  pots: PotView[] = [];
  activations: ActivationState = {};
  anomalies: AnomalyView[] = [];

  constructor(
    private readonly client: GatewayClient,
    private readonly root: HTMLElement,
  ) {}

  async start(): Promise<void> {
    await this.refresh();
    subscribe(this.client.baseUrl, (e) => {
      if (e.type === 'LedFeedback') {
        this.leds.set(e.data.reader_id, e.data.on);
        this.draw();
      } else if (e.type === 'AnomalyReport') {
        this.anomalies.push(e.data);
        this.draw();
      } else {
        // activation changed server-side; re-pull the authoritative view
        void this.client.getActivations().then((a) => {
          this.activations = a;
          this.draw();
        });
      }
    });
  }

  async refresh(): Promise<void> {
    [this.devices, this.tokens, this.pots, this.activations, this.anomalies] =
      await Promise.all([
        this.client.getDevices(),
        this.client.getTokens(),
        this.client.getPots(),
        this.client.getActivations(),
        this.client.getAnomalies(),
      ]);
    this.draw();
  }

  private async push(updates: ReaderUpdate[]): Promise<void> {
    for (const u of updates) {
      await this.client.postReaderState(u.readerId, u.state);
    }
    this.activations = await this.client.getActivations();
    this.draw();
  }

  draw(): void {
    const snap: Snapshot = {
      devices: this.devices,
      tokens: this.tokens,
      pots: this.pots,
      activations: this.activations,
      anomalies: this.anomalies,
      board: this.board,
      leds: this.leds,
    };
    render(this.root, snap, {
      onDropToken: (id, readerId) =>
        void this.push(readerId ? this.board.placeToken(id, readerId) : this.board.removeToken(id)),
      onDropPot: (id, readerId) =>
        void this.push(readerId ? this.board.placePot(id, readerId) : this.board.removePot(id)),
      onAssociate: (tokenId, macs, label) =>
        void this.client.associateToken(tokenId, macs, label).then(() => this.refresh()),
      onConfigurePot: (potId, actions, modality) =>
        void this.client.configurePot(potId, actions, modality).then(() => this.refresh()),
    });
  }
}

export function boot(): void {
  const root = document.getElementById('app');
  if (!root) throw new Error('missing #app element');
  const base = new URLSearchParams(location.search).get('gateway') ?? 'http://127.0.0.1:8420';
  void new Controller(new GatewayClient(base), root).start();
}

if (typeof document !== 'undefined' && document.getElementById('app')) {
  boot();
}
