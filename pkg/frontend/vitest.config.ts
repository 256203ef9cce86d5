import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["tests/**/*.test.ts"],
    globalSetup: ["tests/helpers/globalSetup.ts"],
    testTimeout: 120_000,
    hookTimeout: 300_000,
    // the round-trip suite talks to one shared service process
    fileParallelism: false,
  },
});
