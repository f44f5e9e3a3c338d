import { defineConfig } from "vitest/config";

// base "./" keeps the built page servable from any directory prefix.
export default defineConfig({
  base: "./",
  test: {
    environment: "node",
    include: ["tests/**/*.test.ts"],
  },
});
