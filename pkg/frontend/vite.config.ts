import { defineConfig } from "vitest/config";

export default defineConfig({
  build: { outDir: "dist" },
  server: { proxy: { "/v1": "http://localhost:8000" } },
  test: { environment: "happy-dom", globals: true },
});
