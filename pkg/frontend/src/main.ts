import { DashboardApp } from "./app.js";

const base = new URLSearchParams(window.location.search).get("api") ?? "";
const app = new DashboardApp(base);
app.bind();
