// Wire types for the gateway HTTP API.

export interface DeviceView {
  mac: string;
  ipv4: string;
  manufacturer: string;
  model: string;
  label: string;
  managed: boolean;
  mode: string;
  logging: boolean;
}

export interface TokenView {
  token_id: string;
  label: string;
  macs: string[];
  payload_bytes: number;
}

export interface PotAction {
  kind: string;
  arg: string | null;
}

export interface PotView {
  pot_id: string;
  modality: 'continuous' | 'discrete';
  actions: PotAction[];
}

export interface ActivationView {
  kind: string;
  arg: string | null;
  source_pots: string[];
  since: number;
  latched: boolean;
}

/** Keyed by "<mac>|<category>". */
export type ActivationState = Record<string, ActivationView>;

export interface ActivationChange {
  ts: number;
  change: 'activated' | 'revoked' | 'superseded';
  mac: string;
  category: string;
  kind: string;
  arg: string | null;
  source_pots: string[];
  latched: boolean;
}

export interface LedFeedback {
  reader_id: string;
  on: boolean;
}

export interface AnomalyView {
  mac: string;
  window_start: number;
  score: number;
  offending_dims: string[];
  proposed_action: string;
}

export interface ReaderStateBody {
  ts: number;
  pot: string | null;
  tokens: string[];
}

export interface LatencyReport {
  count: number;
  mean_ns?: number;
  p50_ns?: number;
  p99_ns?: number;
  buckets: { low_ns: number; high_ns: number; count: number }[];
}

export type GatewayEvent =
  | { type: 'ActivationChange'; data: ActivationChange }
  | { type: 'LedFeedback'; data: LedFeedback }
  | { type: 'AnomalyReport'; data: AnomalyView };
