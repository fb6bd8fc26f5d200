/** Operator dashboard view model.  Every number shown is a pass-through
 * of a gateway payload value — the client computes no statistics. */

import type {
  AgreementPayload,
  SessionPayload,
  TrajectoryPoint,
} from "./types.js";

export interface BandPoint {
  waveIndex: number;
  point: number;
  lower: number;
  upper: number;
  verdict: string;
}

export interface KappaTile {
  nDouble: number;
  kappa: number | null;
  passed: boolean | null;
  status: "pending" | "pass" | "fail";
}

export interface StopMarker {
  waveIndex: number;
  verdict: string;
  reason: string;
}

export interface DashboardViewModel {
  points: BandPoint[];
  thresholdLine: number;
  stopMarker: StopMarker | null;
  kappaTile: KappaTile;
  phaseBanner: string;
  reviewed: number;
  poolTotal: number;
  savings: number;
}

export function buildDashboard(
  session: SessionPayload,
  trajectory: TrajectoryPoint[],
  agreement: AgreementPayload,
): DashboardViewModel {
  return {
    points: trajectory.map((p) => ({
      waveIndex: p.wave_index,
      point: p.point_estimate,
      lower: p.lower,
      upper: p.upper,
      verdict: p.verdict,
    })),
    thresholdLine: Number(session.config["threshold"]),
    stopMarker:
      session.stop === null
        ? null
        : {
            waveIndex: session.stop.wave_index,
            verdict: session.stop.verdict,
            reason: session.stop.reason,
          },
    kappaTile: {
      nDouble: agreement.n_double,
      kappa: agreement.kappa,
      passed: agreement.passed,
      status:
        agreement.passed === null
          ? "pending"
          : agreement.passed
            ? "pass"
            : "fail",
    },
    phaseBanner: session.phase,
    reviewed: session.reviewed,
    poolTotal: session.pool_total,
    savings: session.savings,
  };
}
