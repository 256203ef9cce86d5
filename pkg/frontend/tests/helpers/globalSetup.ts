/** Boots a real inference service (tiny corpus + briefly trained checkpoint)
 * once for the whole test run; tests reach it via SERVICE_URL. */

import { execFileSync, spawn, type ChildProcess } from "node:child_process";
import { existsSync, mkdirSync, rmSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

export const SERVICE_PORT = 8731;
export const SERVICE_URL = `http://127.0.0.1:${SERVICE_PORT}`;

const HERE = dirname(fileURLToPath(import.meta.url));
const REPO_ROOT = join(HERE, "..", "..", "..");
const WORK_DIR = join(HERE, "..", "..", ".service-tmp");

let child: ChildProcess | undefined;

function cli(args: string[]): void {
  execFileSync("python3", ["-m", "retinalizer.cli", ...args], {
    cwd: REPO_ROOT,
    stdio: "inherit",
    timeout: 240_000,
  });
}

async function waitForHealth(): Promise<void> {
  const deadline = Date.now() + 60_000;
  while (Date.now() < deadline) {
    try {
      const resp = await fetch(`${SERVICE_URL}/api/health`);
      if (resp.ok) {
        const body = (await resp.json()) as { status: string };
        if (body.status === "ok") return;
      }
    } catch {
      // not up yet
    }
    await new Promise((r) => setTimeout(r, 500));
  }
  throw new Error("service did not become healthy within 60s");
}

export async function setup(): Promise<void> {
  const corpus = join(WORK_DIR, "corpus");
  const checkpoint = join(WORK_DIR, "train", "composer", "last.ckpt");
  if (!existsSync(checkpoint)) {
    rmSync(WORK_DIR, { recursive: true, force: true });
    mkdirSync(WORK_DIR, { recursive: true });
    cli([
      "synth-data",
      "--out", corpus,
      "--seed", "5",
      "--override", "corpus.image_size=32",
      "--override", "corpus.samples_per_dataset=16",
    ]);
    cli([
      "train",
      "--corpus", corpus,
      "--out", join(WORK_DIR, "train"),
      "--run-name", "composer",
      "--override", "model.image_size=32",
      "--override", "model.base_channels=8",
      "--override", "train.steps=2",
      "--override", "train.batch_size=2",
      "--override", "train.context_size=3",
      "--override", "train.val_interval=2",
      "--override", "train.val_episodes=1",
    ]);
  }
  child = spawn(
    "python3",
    [
      "-m", "retinalizer.cli", "serve",
      "--corpus", corpus,
      "--checkpoint", checkpoint,
      "--port", String(SERVICE_PORT),
    ],
    { cwd: REPO_ROOT, stdio: "inherit" },
  );
  await waitForHealth();
}

export async function teardown(): Promise<void> {
  if (child && !child.killed) {
    child.kill("SIGTERM");
    await new Promise((r) => setTimeout(r, 300));
    if (child.exitCode === null) child.kill("SIGKILL");
  }
}
