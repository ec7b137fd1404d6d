import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["test/**/*.test.ts"],
    fileParallelism: false,  // the integration suites each spawn a service
    testTimeout: 60_000,
    hookTimeout: 60_000,
  },
});
