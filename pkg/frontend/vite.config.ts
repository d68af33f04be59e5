import { defineConfig } from "vite";

export default defineConfig({
  build: {
    outDir: "dist",
    sourcemap: true,
  },
  server: {
    // The prediction service runs separately; proxy keeps the dev page
    // same-origin with it.
    proxy: {
      "/api": "http://127.0.0.1:8000",
    },
  },
});
