import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { MemoryStore, SessionRunner } from "../src/session.js";
import { FakeService, mosStimuli } from "./fake_service.js";

function setup(n = 5) {
  const service = new FakeService("t1", mosStimuli(n));
  const api = new ApiClient("", service.fetch);
  const store = new MemoryStore();
  return { service, api, store };
}

describe("SessionRunner", () => {
  it("walks the playlist in service order and submits every trial", async () => {
    const { service, api, store } = setup(5);
    const runner = await SessionRunner.start(api, "t1", store);
    const seen: string[] = [];
    while (!runner.done()) {
      seen.push(runner.current() as string);
      expect(await runner.submit({ value: 4 })).toBe("accepted");
    }
    expect(seen).toEqual(runner.playlist);
    expect(service.accepted).toHaveLength(5);
    expect(runner.progress()).toEqual({ index: 5, total: 5 });
  });

  it("resumes at the first unanswered trial after a reload", async () => {
    const { service, api, store } = setup(5);
    const first = await SessionRunner.start(api, "t1", store);
    await first.submit({ value: 3 });
    await first.submit({ value: 3 });

    const resumed = await SessionRunner.start(api, "t1", store);
    expect(resumed.sessionId).toBe(first.sessionId);
    expect(resumed.current()).toBe(first.playlist[2]);
    while (!resumed.done()) await resumed.submit({ value: 5 });
    expect(service.accepted).toHaveLength(5);
    expect(service.sessions.size).toBe(1);
  });

  it("advances on 409 when local progress is stale", async () => {
    const { service, api, store } = setup(3);
    const first = await SessionRunner.start(api, "t1", store);
    await first.submit({ value: 2 });

    // simulate losing the answered list but keeping the session
    const raw = JSON.parse(store.getItem("listening-test:t1") as string);
    raw.answered = [];
    store.setItem("listening-test:t1", JSON.stringify(raw));

    const resumed = await SessionRunner.start(api, "t1", store);
    expect(await resumed.submit({ value: 2 })).toBe("duplicate");
    expect(await resumed.submit({ value: 2 })).toBe("accepted");
    expect(await resumed.submit({ value: 2 })).toBe("accepted");
    expect(resumed.done()).toBe(true);
    expect(service.accepted).toHaveLength(3);
  });

  it("keeps the trial in place when the service is unreachable", async () => {
    const { service, api, store } = setup(2);
    const runner = await SessionRunner.start(api, "t1", store);
    const current = runner.current();
    service.failNextSubmit = true;
    await expect(runner.submit({ value: 1 })).rejects.toThrow();
    expect(runner.current()).toBe(current);
    expect(await runner.submit({ value: 1 })).toBe("accepted");
  });
});
