/** Stdio entry point: one JSON message per line in, one per line out. */

import * as readline from "node:readline";

import { Handled, Message, MirrorWorld, handleMessage } from "./agent";

const MAX_LINE_BYTES = 1 << 20;

function main(): void {
  const agent = new MirrorWorld();
  const rl = readline.createInterface({ input: process.stdin, terminal: false });

  const send = (message: Message, exitCode: number | null): void => {
    const line = JSON.stringify(message) + "\n";
    if (exitCode === null) {
      process.stdout.write(line);
    } else {
      // exit only once the response is flushed; closing rl first would race it
      process.stdout.write(line, () => process.exit(exitCode));
    }
  };

  rl.on("line", (line: string) => {
    if (!line.trim()) return;
    if (Buffer.byteLength(line, "utf8") > MAX_LINE_BYTES) {
      send({ type: "error", session: "",
             payload: { reason: "message exceeds 1 MiB" } }, 1);
      return;
    }
    let msg: unknown;
    try {
      msg = JSON.parse(line);
    } catch (err) {
      send({ type: "error", session: "",
             payload: { reason: `undecodable message: ${err}` } }, 1);
      return;
    }
    if (typeof msg !== "object" || msg === null || typeof (msg as Message).type !== "string") {
      send({ type: "error", session: "",
             payload: { reason: "message must be an object with a string 'type'" } }, 1);
      return;
    }
    let handled: Handled;
    try {
      handled = handleMessage(agent, msg as Message);
    } catch (err) {
      send({ type: "error", session: (msg as Message).session ?? "",
             payload: { reason: `agent fault: ${err}` } }, 1);
      return;
    }
    send(handled.response, handled.done ? 0 : handled.fatal ? 1 : null);
  });

  rl.on("close", () => process.exit(0));
}

main();
