import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "jsdom",
    include: ["tests/**/*.test.ts"],
    // The end-to-end file spawns the Python service; keep files sequential
    // so the two servers never fight over the single sandbox core.
    fileParallelism: false,
  },
});
