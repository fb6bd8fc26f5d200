/** Contract: the duplicate-submit flow.  The recorded scenario replays an
 * identical annotation after a reconnect: the server answers 409, the
 * client treats it as already-accepted, and the session log holds exactly
 * one record for that (annotator, patient). */

import { describe, expect, it } from "vitest";

import duplicate from "../fixtures/duplicate_submit.json";
import { ApiClient, ApiError, type FetchLike } from "../src/api.js";
import type { AnnotationRequest } from "../src/types.js";

interface DuplicateFixture {
  request: AnnotationRequest;
  annotator_id: string;
  first_accepted_seq: number;
  second_response: { status: number; body: { detail: string } };
  log_records: Array<{
    type: string;
    seq: number;
    patient_id: string;
    annotator_id: string;
    label: string;
  }>;
}

const FIXTURE = duplicate as unknown as DuplicateFixture;

/** Replays the recorded responses: first submit accepted, then 409s. */
function recordedServer(): { fetch: FetchLike; bodies: string[] } {
  const bodies: string[] = [];
  let submits = 0;
  const fetchImpl: FetchLike = async (url, init) => {
    if (!url.endsWith("/annotations") || init?.method !== "POST") {
      throw new Error(`unexpected request ${init?.method} ${url}`);
    }
    bodies.push(init.body ?? "");
    submits += 1;
    if (submits === 1) {
      return {
        status: 200,
        json: async () => ({ seq: FIXTURE.first_accepted_seq }),
      };
    }
    return {
      status: FIXTURE.second_response.status,
      json: async () => FIXTURE.second_response.body,
    };
  };
  return { fetch: fetchImpl, bodies };
}

describe("duplicate submission", () => {
  it("second identical submit is reported as accepted-as-duplicate", async () => {
    const server = recordedServer();
    const client = new ApiClient("http://gw", "token-annotator_a", server.fetch);

    const first = await client.submitAnnotation(FIXTURE.request);
    expect(first).toEqual({
      accepted: true,
      duplicate: false,
      seq: FIXTURE.first_accepted_seq,
    });

    const second = await client.submitAnnotation(FIXTURE.request);
    expect(second.accepted).toBe(true);
    expect(second.duplicate).toBe(true);

    // both attempts sent byte-identical payloads
    expect(server.bodies[1]).toBe(server.bodies[0]);
  });

  it("the recorded log holds exactly one record for the pair", () => {
    const matching = FIXTURE.log_records.filter(
      (r) =>
        r.type === "annotation" &&
        r.patient_id === FIXTURE.request.patient_id &&
        r.annotator_id === FIXTURE.annotator_id,
    );
    expect(matching).toHaveLength(1);
    expect(matching[0]!.seq).toBe(FIXTURE.first_accepted_seq);
    expect(FIXTURE.second_response.status).toBe(409);
  });

  it("transport failures retry with the payload unchanged", async () => {
    const bodies: string[] = [];
    let calls = 0;
    const flaky: FetchLike = async (_url, init) => {
      bodies.push(init?.body ?? "");
      calls += 1;
      if (calls === 1) throw new TypeError("network unreachable");
      return { status: 200, json: async () => ({ seq: 7 }) };
    };
    const client = new ApiClient("http://gw", "t", flaky);
    const result = await client.submitWithRetry(FIXTURE.request);
    expect(result.seq).toBe(7);
    expect(bodies).toHaveLength(2);
    expect(bodies[1]).toBe(bodies[0]);
  });

  it("non-duplicate rejections surface as errors, not silent success", async () => {
    const rejecting: FetchLike = async () => ({
      status: 423,
      json: async () => ({ detail: "session stopped" }),
    });
    const client = new ApiClient("http://gw", "t", rejecting);
    await expect(client.submitAnnotation(FIXTURE.request)).rejects.toThrow(
      ApiError,
    );
  });
});
