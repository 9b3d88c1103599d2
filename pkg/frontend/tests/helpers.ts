/** Spawns the real session service for integration tests. */

import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync } from "node:fs";
import { createServer } from "node:net";
import { tmpdir } from "node:os";
import { join } from "node:path";

export interface ServiceHandle {
  baseUrl: string;
  dataDir: string;
  port: number;
  stop: () => Promise<void>;
}

// small solver budgets keep proposals fast; semantics are setting-independent
export const FAST_SOLVER = {
  fit: { restarts: 2, iterations: 80 },
  acquisition: { starts: 6 },
  nsga2: {
    population: 16,
    generations: 10,
    offspring_per_gen: 6,
    mutations_per_gen: 4,
  },
};

export function demoPayload(overrides: Record<string, unknown> = {}) {
  return {
    mode: "demo",
    function: { kind: "gp", dimension: 1, seed: 3 },
    budget: 8,
    p: 4,
    seed: 17,
    ...FAST_SOLVER,
    ...overrides,
  };
}

export function freePort(): Promise<number> {
  return new Promise((resolve, reject) => {
    const probe = createServer();
    probe.once("error", reject);
    probe.listen(0, "127.0.0.1", () => {
      const addr = probe.address();
      if (addr === null || typeof addr === "string") {
        reject(new Error("no port assigned"));
        return;
      }
      probe.close(() => resolve(addr.port));
    });
  });
}

export async function startService(
  dataDir?: string,
  seed = 0,
): Promise<ServiceHandle> {
  const dir = dataDir ?? mkdtempSync(join(tmpdir(), "hilbo-ui-"));
  const port = await freePort();
  const child: ChildProcess = spawn(
    "python3",
    ["-m", "hilbo.cli", "serve", "--port", String(port), "--data", dir,
     "--seed", String(seed)],
    { stdio: ["ignore", "pipe", "pipe"] },
  );
  let stderr = "";
  child.stderr?.on("data", (chunk) => {
    stderr += String(chunk);
  });
  try {
    await new Promise<void>((resolve, reject) => {
      const timer = setTimeout(
        () => reject(new Error(`service did not start: ${stderr}`)),
        20_000,
      );
      child.stdout?.on("data", (chunk) => {
        if (String(chunk).includes("session service on")) {
          clearTimeout(timer);
          resolve();
        }
      });
      child.once("exit", (code) => {
        clearTimeout(timer);
        reject(new Error(`service exited early with ${code}: ${stderr}`));
      });
    });
  } catch (err) {
    child.kill("SIGKILL");
    throw err;
  }
  return {
    baseUrl: `http://127.0.0.1:${port}`,
    dataDir: dir,
    port,
    stop: () =>
      new Promise<void>((resolve) => {
        child.once("exit", () => resolve());
        child.kill("SIGTERM");
        setTimeout(() => child.kill("SIGKILL"), 3000).unref();
      }),
  };
}
