import { defineConfig } from "vitest/config";

export default defineConfig({
    test: {
        include: ["tests/**/*.test.ts"],
        environment: "node",
        testTimeout: 60000,
        hookTimeout: 90000,
        // The e2e suite drives one shared live session; keep files serial.
        fileParallelism: false,
    },
});
