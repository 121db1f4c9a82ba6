#!/usr/bin/env node
// Batch-mode SMT-LIB2 front end for the z3 WASM build: z3cli.js <file.smt2>
// Prints sat/unsat/unknown and the model, like the native z3 binary.
'use strict';

const fs = require('fs');
const path = require('path');

// process.exit() would truncate large pipe writes; await the flush instead.
function writeAll(text) {
  return new Promise((resolve) => process.stdout.write(text, resolve));
}

async function main() {
  const file = process.argv[2];
  if (!file) {
    console.error('usage: z3cli.js <file.smt2>');
    process.exitCode = 2;
    return;
  }
  const script = fs.readFileSync(file, 'utf8');
  const { init } = require(path.join(__dirname, 'node_modules', 'z3-solver'));
  const { Z3 } = await init();
  const cfg = Z3.mk_config();
  const ctx = Z3.mk_context(cfg);
  try {
    const out = await Z3.eval_smtlib2_string(ctx, script);
    await writeAll(out.endsWith('\n') ? out : out + '\n');
  } catch (err) {
    // z3 raises on (get-model) after unsat; recover the verdict if present.
    const msg = String(err && err.message ? err.message : err);
    if (msg.includes('unsat')) {
      await writeAll('unsat\n');
    } else {
      console.error(msg);
      process.exitCode = 1;
      return;
    }
  }
  process.exitCode = 0;
}

main().then(
  () => process.exit(process.exitCode || 0),
  (err) => {
    console.error(String(err));
    process.exit(1);
  }
);
