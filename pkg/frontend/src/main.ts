// Bootstrap: resolve the API base, build the store and view, and keep the
// selected country in the URL hash (the only routing the app has).

import { ApiClient } from "./api.js";
import { App } from "./app.js";
import { DashboardStore, toBanner } from "./state.js";

function apiBase(): string {
    const params = new URLSearchParams(window.location.search);
    return params.get("api") ?? "";
}

async function boot(): Promise<void> {
    const store = new DashboardStore(new ApiClient(apiBase()));
    const root = document.getElementById("app");
    if (!root) {
        throw new Error("missing #app container");
    }
    const app = new App(store, root);
    try {
        await store.loadCountries();
    } catch (err) {
        store.state.banner = toBanner(err);
        app.render();
        return;
    }
    app.populateCountries();

    const applyHash = () => {
        const country = window.location.hash.replace(/^#/, "");
        if (country) {
            void store.selectCountry(country);
        }
    };
    window.addEventListener("hashchange", applyHash);
    if (window.location.hash) {
        applyHash();
    } else if (store.countries && store.countries.countries.length) {
        window.location.hash = store.countries.countries[0].id;
    }
    app.render();
}

void boot();
