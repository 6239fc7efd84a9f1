// DOM rendering for the board page.  All state lives in the controller
// (main.ts); this module turns a snapshot into elements and wires the
// drag/drop and form callbacks back out.

import type { Board } from './board.js';
import type {
  ActivationState,
  AnomalyView,
  DeviceView,
  PotView,
  TokenView,
} from './types.js';

export interface Snapshot {
  devices: DeviceView[];
  tokens: TokenView[];
  pots: PotView[];
  activations: ActivationState;
  anomalies: AnomalyView[];
  board: Board;
  leds: Map<string, boolean>;
}

export interface Callbacks {
  onDropToken(tokenId: string, readerId: string | null): void;
  onDropPot(potId: string, readerId: string | null): void;
  onAssociate(tokenId: string, macs: string[], label: string): void;
  onConfigurePot(
    potId: string,
    actions: { kind: string; arg: string | null }[],
    modality: 'continuous' | 'discrete',
  ): void;
}

const ACTION_KINDS = [
  'RemoveFromNetwork',
  'SwitchNetwork',
  'RestrictAccess',
  'AllowResource',
  'LogAllTraffic',
  'Reboot',
];

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className = '',
  text = '',
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text) node.textContent = text;
  return node;
}

function draggable(node: HTMLElement, kind: 'token' | 'pot', id: string): HTMLElement {
  node.draggable = true;
  node.addEventListener('dragstart', (e) => {
    e.dataTransfer?.setData('text/plain', `${kind}:${id}`);
  });
  return node;
}

function dropZone(node: HTMLElement, readerId: string | null, cb: Callbacks): HTMLElement {
  node.addEventListener('dragover', (e) => e.preventDefault());
  node.addEventListener('drop', (e) => {
    e.preventDefault();
    const payload = e.dataTransfer?.getData('text/plain') ?? '';
    const [kind, id] = payload.split(':', 2);
    if (kind === 'token') cb.onDropToken(id, readerId);
    else if (kind === 'pot') cb.onDropPot(id, readerId);
  });
  return node;
}

function tokenChip(t: TokenView, snap: Snapshot): HTMLElement {
  const chip = el('div', 'chip token', t.label || t.token_id);
  chip.title = t.macs
    .map((m) => {
      const d = snap.devices.find((d) => d.mac === m);
      return d?.label || d?.model || m;
    })
    .join(', ');
  return draggable(chip, 'token', t.token_id);
}

function potChip(p: PotView): HTMLElement {
  const label = p.actions.map((a) => (a.arg ? `${a.kind}(${a.arg})` : a.kind)).join(' + ');
  const chip = el('div', `chip pot ${p.modality}`, `${p.pot_id}: ${label}`);
  chip.title = `${p.modality} pot`;
  return draggable(chip, 'pot', p.pot_id);
}

function renderReader(readerId: string, snap: Snapshot, cb: Callbacks): HTMLElement {
  const slot = snap.board.readers.get(readerId)!;
  const card = dropZone(el('div', 'reader'), readerId, cb);
  const head = el('div', 'reader-head', readerId);
  const led = el('span', `led ${snap.leds.get(readerId) ? 'on' : 'off'}`);
  head.append(led);
  card.append(head);

  const potWell = el('div', 'pot-well');
  if (slot.pot) {
    const pot = snap.pots.find((p) => p.pot_id === slot.pot);
    if (pot) potWell.append(potChip(pot));
  } else {
    potWell.append(el('span', 'hint', 'drop a pot'));
  }
  card.append(potWell);

  const tokenWell = el('div', 'token-well');
  for (const id of [...slot.tokens].sort()) {
    const token = snap.tokens.find((t) => t.token_id === id);
    if (token) tokenWell.append(tokenChip(token, snap));
  }
  if (slot.tokens.size === 0) tokenWell.append(el('span', 'hint', 'drop tokens'));
  card.append(tokenWell);
  return card;
}

function renderTray(snap: Snapshot, cb: Callbacks): HTMLElement {
  const tray = dropZone(el('div', 'tray'), null, cb);
  tray.append(el('h2', '', 'Tray'));
  const { tokens, pots } = snap.board.tray(
    snap.tokens.map((t) => t.token_id),
    snap.pots.map((p) => p.pot_id),
  );
  const tokenRow = el('div', 'tray-row');
  for (const id of tokens) {
    const t = snap.tokens.find((x) => x.token_id === id);
    if (t) tokenRow.append(tokenChip(t, snap));
  }
  const potRow = el('div', 'tray-row');
  for (const id of pots) {
    const p = snap.pots.find((x) => x.pot_id === id);
    if (p) potRow.append(potChip(p));
  }
  tray.append(tokenRow, potRow);
  return tray;
}

function renderActivations(snap: Snapshot): HTMLElement {
  const box = el('div', 'panel activations');
  box.append(el('h2', '', 'Active controls'));
  const entries = Object.entries(snap.activations);
  if (entries.length === 0) {
    box.append(el('p', 'hint', 'none'));
    return box;
  }
  const table = el('table');
  for (const [key, a] of entries.sort()) {
    const [mac, category] = key.split('|');
    const row = el('tr', a.latched ? 'latched' : '');
    const device = snap.devices.find((d) => d.mac === mac);
    row.append(
      el('td', '', device?.label || mac),
      el('td', '', category),
      el('td', '', a.arg ? `${a.kind}(${a.arg})` : a.kind),
      el('td', '', a.latched ? 'latched' : 'live'),
    );
    table.append(row);
  }
  box.append(table);
  return box;
}

function renderAnomalies(snap: Snapshot): HTMLElement {
  const box = el('div', 'panel anomalies');
  box.append(el('h2', '', 'Anomalies'));
  if (snap.anomalies.length === 0) {
    box.append(el('p', 'hint', 'none'));
    return box;
  }
  for (const a of snap.anomalies.slice(-10).reverse()) {
    box.append(
      el(
        'div',
        'anomaly',
        `${a.mac} score ${a.score.toFixed(1)} (${a.offending_dims.join(', ')}) → ${a.proposed_action}`,
      ),
    );
  }
  return box;
}

function renderForms(snap: Snapshot, cb: Callbacks): HTMLElement {
  const box = el('div', 'panel forms');
  box.append(el('h2', '', 'Configure'));

  const assoc = el('form', 'assoc-form');
  const tokenId = el('input');
  tokenId.placeholder = 'tok-…';
  const label = el('input');
  label.placeholder = 'label';
  const macSelect = el('select');
  macSelect.multiple = true;
  for (const d of snap.devices) {
    const opt = el('option', '', d.label || `${d.mac} (${d.manufacturer})`);
    opt.value = d.mac;
    macSelect.append(opt);
  }
  const assocBtn = el('button', '', 'Associate token');
  assoc.append(tokenId, label, macSelect, assocBtn);
  assoc.addEventListener('submit', (e) => {
    e.preventDefault();
    const macs = [...macSelect.selectedOptions].map((o) => o.value);
    if (tokenId.value && macs.length > 0) cb.onAssociate(tokenId.value, macs, label.value);
  });

  const potForm = el('form', 'pot-form');
  const potId = el('input');
  potId.placeholder = 'pot-…';
  const kind = el('select');
  for (const k of ACTION_KINDS) {
    const opt = el('option', '', k);
    opt.value = k;
    kind.append(opt);
  }
  const arg = el('input');
  arg.placeholder = 'arg (SwitchNetwork: privileged|unprivileged)';
  const modality = el('select');
  for (const m of ['continuous', 'discrete']) {
    const opt = el('option', '', m);
    opt.value = m;
    modality.append(opt);
  }
  const potBtn = el('button', '', 'Configure pot');
  potForm.append(potId, kind, arg, modality, potBtn);
  potForm.addEventListener('submit', (e) => {
    e.preventDefault();
    if (!potId.value) return;
    cb.onConfigurePot(
      potId.value,
      [{ kind: kind.value, arg: arg.value || null }],
      modality.value as 'continuous' | 'discrete',
    );
  });

  box.append(assoc, potForm);
  return box;
}

export function render(root: HTMLElement, snap: Snapshot, cb: Callbacks): void {
  root.replaceChildren();
  const board = el('div', 'board');
  for (const readerId of [...snap.board.readers.keys()].sort()) {
    board.append(renderReader(readerId, snap, cb));
  }
  const side = el('div', 'side');
  side.append(renderActivations(snap), renderAnomalies(snap), renderForms(snap, cb));
  root.append(renderTray(snap, cb), board, side);
}
