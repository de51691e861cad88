/** Entry point: ?test=ID runs a rater session, ?results=ID shows the table. */

import { ApiClient, ServiceError } from "./api.js";
import { SessionRunner } from "./session.js";
import { App } from "./ui.js";

function fail(container: HTMLElement, message: string): void {
  const p = document.createElement("p");
  p.className = "error";
  p.textContent = message;
  container.replaceChildren(p);
}

export async function bootstrap(
  container: HTMLElement,
  search: string = window.location.search,
): Promise<void> {
  const params = new URLSearchParams(search);
  const api = new ApiClient("");
  const app = new App(api, container);
  const resultsId = params.get("results");
  const testId = params.get("test");
  try {
    if (resultsId !== null) {
      await app.renderResults(resultsId);
    } else if (testId !== null) {
      const runner = await SessionRunner.start(api, testId, window.localStorage);
      await app.runSession(runner);
    } else {
      fail(container, "Open this page with ?test=TEST_ID to rate, or ?results=TEST_ID.");
    }
  } catch (error) {
    if (error instanceof ServiceError) {
      fail(container, `Service unreachable: ${error.message}. Reload to retry.`);
    } else {
      throw error;
    }
  }
}

const root = document.getElementById("app");
if (root !== null) {
  void bootstrap(root);
}
