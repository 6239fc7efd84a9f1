// Thin typed client over the gateway HTTP API.

import type {
  ActivationChange,
  ActivationState,
  AnomalyView,
  DeviceView,
  LatencyReport,
  PotAction,
  PotView,
  ReaderStateBody,
  TokenView,
} from './types.js';

export class ApiError extends Error {
  constructor(readonly status: number, detail: string) {
    super(`HTTP ${status}: ${detail}`);
  }
}

type FetchLike = typeof fetch;

export class GatewayClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = fetch,
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const res = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method,
      headers: body === undefined ? undefined : { 'content-type': 'application/json' },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const text = await res.text();
    if (!res.ok) {
      let detail = text;
      try {
        detail = JSON.parse(text).detail ?? text;
      } catch {
        /* non-JSON error body */
      }
      throw new ApiError(res.status, detail);
    }
    return JSON.parse(text) as T;
  }

  getDevices(): Promise<DeviceView[]> {
    return this.request('GET', '/devices');
  }

  setLabel(mac: string, label: string): Promise<{ mac: string; label: string }> {
    return this.request('POST', `/devices/${encodeURIComponent(mac)}/label`, { label });
  }

  getTokens(): Promise<TokenView[]> {
    return this.request('GET', '/tokens');
  }

  associateToken(tokenId: string, macs: string[], label = ''): Promise<TokenView> {
    return this.request('POST', `/tokens/${encodeURIComponent(tokenId)}/associate`, {
      macs,
      label,
    });
  }

  getPots(): Promise<PotView[]> {
    return this.request('GET', '/pots');
  }

  configurePot(
    potId: string,
    actions: PotAction[],
    modality: 'continuous' | 'discrete',
  ): Promise<PotView> {
    return this.request('POST', `/pots/${encodeURIComponent(potId)}/configure`, {
      actions,
      modality,
    });
  }

  postReaderState(
    readerId: string,
    state: ReaderStateBody,
  ): Promise<{ changes: ActivationChange[] }> {
    return this.request('POST', `/reader/${encodeURIComponent(readerId)}/state`, state);
  }

  getActivations(): Promise<ActivationState> {
    return this.request('GET', '/activations');
  }

  getAnomalies(): Promise<AnomalyView[]> {
    return this.request('GET', '/anomalies');
  }

  getLatency(): Promise<LatencyReport> {
    return this.request('GET', '/metrics/latency');
  }
}
