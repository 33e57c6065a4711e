import { describe, expect, it } from "vitest";

import { ApiClient, ApiError } from "../src/api";

function jsonResponse(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

describe("ApiClient", () => {
  it("wires lift requests to POST /lift", async () => {
    const calls: Array<{ url: string; init?: RequestInit }> = [];
    const api = new ApiClient("http://srv", async (url, init) => {
      calls.push({ url, init });
      return jsonResponse(200, { ranked: [] });
    });
    await api.lift({ x: [1, 2], relation: "isPartOf", dir: "fwd", k: 5 });
    expect(calls).toHaveLength(1);
    expect(calls[0].url).toBe("http://srv/lift");
    expect(calls[0].init?.method).toBe("POST");
    expect(JSON.parse(calls[0].init?.body as string)).toEqual({
      x: [1, 2],
      relation: "isPartOf",
      dir: "fwd",
      k: 5,
    });
  });

  it("parses structured field errors", async () => {
    const api = new ApiClient("http://srv", async () =>
      jsonResponse(400, {
        error: { message: "invalid request", fields: { relation: "required" } },
      }),
    );
    try {
      await api.lift({ x: [0, 0], relation: "", dir: "fwd", k: 1 });
      expect.unreachable("should have thrown");
    } catch (err) {
      expect(err).toBeInstanceOf(ApiError);
      const apiErr = err as ApiError;
      expect(apiErr.status).toBe(400);
      expect(apiErr.fields.relation).toBe("required");
    }
  });

  it("builds the entities query string", async () => {
    const urls: string[] = [];
    const api = new ApiClient("http://srv", async (url) => {
      urls.push(url);
      return jsonResponse(200, { entities: [] });
    });
    await api.entities([1, 2, 3, 4], 99);
    expect(urls[0]).toBe("http://srv/entities?bbox=1,2,3,4&limit=99");
  });
});
