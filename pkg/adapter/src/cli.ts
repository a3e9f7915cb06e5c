#!/usr/bin/env node
import yargs from 'yargs';
import {hideBin} from 'yargs/helpers';

import {EncoderError} from './encoders.js';
import {JobError, extractEmbeddings, loadJob} from './extract.js';
import {WavError} from './wav.js';

async function main(): Promise<number> {
  const argv = await yargs(hideBin(process.argv))
    .command('extract', 'run encoders over a corpus and write a manifest', (y) =>
      y.option('job', {type: 'string', demandOption: true, describe: 'JSON job file'}))
    .demandCommand(1)
    .strict()
    .exitProcess(false)
    .fail((msg) => {
      throw new JobError(msg);
    })
    .parse();

  const result = extractEmbeddings(loadJob(argv.job as string));
  console.log(
    `wrote manifest: ${result.speechRows} speech rows, ` +
    `${result.textRows} text rows -> ${result.outputDir}`);
  return 0;
}

main()
  .then((code) => process.exit(code))
  .catch((e) => {
    const known = e instanceof JobError || e instanceof EncoderError || e instanceof WavError;
    console.error(`error: ${e.message}`);
    process.exit(known ? 1 : 2);
  });
