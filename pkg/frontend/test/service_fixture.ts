/** Spawns the Python explanation service for integration tests. */
import { ChildProcess, execFile, spawn } from "node:child_process";
import { existsSync } from "node:fs";
import { get } from "node:http";
import { delimiter, dirname, join, resolve } from "node:path";
import { promisify } from "node:util";

const execFileAsync = promisify(execFile);

/** Repo root found by walking up to pyproject.toml (import.meta.url is
 * unusable here: DOM test environments rewrite it to /@fs/... URLs). */
function findRepoRoot(): string {
  let dir = process.cwd();
  for (let i = 0; i < 6; i += 1) {
    if (existsSync(join(dir, "pyproject.toml"))) return dir;
    dir = dirname(dir);
  }
  return resolve(process.cwd(), "..");
}

export const REPO_ROOT = findRepoRoot();

/** Absolute interpreter path; DOM test environments may not expose PATH. */
export function pythonBin(): string {
  const candidates = (process.env.PATH ?? "/usr/local/bin:/usr/bin:/bin")
    .split(delimiter)
    .map((dir) => join(dir, "python3"));
  for (const candidate of candidates) {
    if (existsSync(candidate)) return candidate;
  }
  return "python3";
}

export interface ServiceHandle {
  baseUrl: string;
  stop: () => void;
}

export async function startService(port: number): Promise<ServiceHandle> {
  const child: ChildProcess = spawn(
    pythonBin(),
    ["-m", "uvicorn", "declex.service:app", "--port", String(port),
     "--log-level", "warning"],
    { cwd: REPO_ROOT, stdio: ["ignore", "ignore", "pipe"] },
  );
  let stderr = "";
  child.stderr?.on("data", (chunk) => { stderr += String(chunk); });
  const baseUrl = `http://127.0.0.1:${port}`;
  // readiness probe over node:http: DOM test environments wrap fetch
  const probe = () => new Promise<boolean>((done) => {
    get(`${baseUrl}/sessions/none/transcript`, (res) => {
      res.resume();
      done(true);
    }).on("error", () => done(false));
  });
  for (let attempt = 0; attempt < 100; attempt += 1) {
    if (child.exitCode !== null) {
      throw new Error(`service exited early:\n${stderr}`);
    }
    if (await probe()) {
      return { baseUrl, stop: () => child.kill() };
    }
    await new Promise((resolve) => setTimeout(resolve, 150));
  }
  child.kill();
  throw new Error(`service did not come up:\n${stderr}`);
}

/** Runs the CLI on a session script and returns its structured stdout. */
export async function runCliStructured(
  scriptPath: string, schemaPath: string, modelPaths: string[],
): Promise<string> {
  const args = ["-m", "declex.cli", "session", "--schema", schemaPath,
                "--format", "structured", "--script", scriptPath];
  for (const model of modelPaths) args.push("--model", model);
  const { stdout } = await execFileAsync(pythonBin(), args, { cwd: REPO_ROOT });
  return stdout;
}
